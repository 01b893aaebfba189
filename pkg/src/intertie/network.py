"""Domain model for multi-area transmission networks.

Conventions used throughout the package: power in MW, reactances in per
unit on a single system base (MVA recorded on the network), prices in
$/MWh, costs in $/h. Demand is a fixed nodal quantity. All values are
immutable after construction and safe to share between workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

__all__ = [
    "QuadraticCost",
    "Generator",
    "Bus",
    "InternalLine",
    "Tieline",
    "Network",
    "TielineEnd",
    "validate",
    "scale_costs",
]


@dataclass(frozen=True)
class QuadraticCost:
    """Strictly convex generation cost  c2*p^2 + c1*p + c0  ($/h, p in MW)."""

    c2: float  # $/MW^2 h, must be > 0
    c1: float  # $/MWh
    c0: float = 0.0  # $/h

    def value(self, p: float) -> float:
        return (self.c2 * p + self.c1) * p + self.c0

    def marginal(self, p: float) -> float:
        return 2.0 * self.c2 * p + self.c1

    def scaled(self, factor: float) -> "QuadraticCost":
        return QuadraticCost(self.c2 * factor, self.c1 * factor, self.c0 * factor)


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    cost: QuadraticCost
    p_min: float  # MW
    p_max: float  # MW


@dataclass(frozen=True)
class Bus:
    id: str
    area: str
    load: float = 0.0  # MW, inelastic


@dataclass(frozen=True)
class InternalLine:
    """Transmission line with both terminals inside one area."""

    from_bus: str
    to_bus: str
    reactance: float  # pu
    limit: float  # MW


@dataclass(frozen=True)
class Tieline:
    """Line joining two areas. A single record serves both end views;
    limit and reactance are therefore symmetric by construction."""

    id: str
    from_area: str
    from_bus: str
    to_area: str
    to_bus: str
    reactance: float  # pu
    limit: float  # MW

    def areas(self) -> tuple[str, str]:
        return (self.from_area, self.to_area)


@dataclass(frozen=True)
class TielineEnd:
    """One area's view of a tieline.

    ``sign`` is +1 when the area owns the from side, so that
    ``sign * canonical_flow`` is that area's exported power.
    """

    tieline: Tieline
    area: str

    @property
    def sign(self) -> float:
        return 1.0 if self.area == self.tieline.from_area else -1.0

    @property
    def own_bus(self) -> str:
        t = self.tieline
        return t.from_bus if self.sign > 0 else t.to_bus

    @property
    def neighbor_area(self) -> str:
        t = self.tieline
        return t.to_area if self.sign > 0 else t.from_area

    @property
    def neighbor_bus(self) -> str:
        t = self.tieline
        return t.to_bus if self.sign > 0 else t.from_bus


@dataclass(frozen=True)
class Network:
    areas: tuple[str, ...]
    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    internal_lines: tuple[InternalLine, ...]
    tielines: tuple[Tieline, ...]
    slack: tuple[str, str] = ("", "")  # (area, bus); default: first bus of first area
    base_mva: float = 100.0
    name: str = ""

    def __post_init__(self):
        if self.slack == ("", "") and self.buses:
            first = next(b for b in self.buses if b.area == self.areas[0])
            object.__setattr__(self, "slack", (first.area, first.id))

    # -- lookups ---------------------------------------------------------

    @cached_property
    def _bus_map(self) -> dict[str, Bus]:
        return {b.id: b for b in self.buses}

    @cached_property
    def _tieline_map(self) -> dict[str, Tieline]:
        return {t.id: t for t in self.tielines}

    def bus(self, bus_id: str) -> Bus:
        return self._bus_map[bus_id]

    def tieline(self, tieline_id: str) -> Tieline:
        return self._tieline_map[tieline_id]

    def buses_in(self, area: str) -> tuple[Bus, ...]:
        return tuple(b for b in self.buses if b.area == area)

    def generators_in(self, area: str) -> tuple[Generator, ...]:
        return tuple(g for g in self.generators if self._bus_map[g.bus].area == area)

    def lines_in(self, area: str) -> tuple[InternalLine, ...]:
        return tuple(
            ln for ln in self.internal_lines if self._bus_map[ln.from_bus].area == area
        )

    def tieline_ends(self, area: str) -> tuple[TielineEnd, ...]:
        """Incident tielines from ``area``'s point of view, in registration order."""
        return tuple(
            TielineEnd(t, area) for t in self.tielines if area in t.areas()
        )

    def total_load(self, area: str | None = None) -> float:
        return sum(b.load for b in self.buses if area is None or b.area == area)

    # -- derived networks ------------------------------------------------

    def without_area(self, area: str) -> "Network":
        """Drop one area together with its incident tielines.

        The remaining slack is kept if it survives, otherwise it moves to
        the first bus of the first remaining area.
        """
        if area not in self.areas:
            raise KeyError(f"unknown area {area!r}")
        areas = tuple(a for a in self.areas if a != area)
        if not areas:
            raise ValueError("cannot remove the only area")
        buses = tuple(b for b in self.buses if b.area != area)
        kept = {b.id for b in buses}
        slack = self.slack if self.slack[0] != area else ()
        net = Network(
            areas=areas,
            buses=buses,
            generators=tuple(g for g in self.generators if g.bus in kept),
            internal_lines=tuple(
                ln for ln in self.internal_lines if ln.from_bus in kept
            ),
            tielines=tuple(t for t in self.tielines if area not in t.areas()),
            slack=slack if slack else ("", ""),
            base_mva=self.base_mva,
            name=f"{self.name}-without-{area}" if self.name else "",
        )
        return net

    def with_loads(self, deltas: dict[str, float]) -> "Network":
        """Return a copy with ``deltas`` (MW, signed) added to bus loads."""
        buses = tuple(
            replace(b, load=b.load + deltas.get(b.id, 0.0)) for b in self.buses
        )
        return replace(self, buses=buses)


def scale_costs(network: Network, area: str, factor: float) -> Network:
    """Scale every cost coefficient of ``area``'s generators by ``factor``.

    This is the constructor for scaled reporting strategies: the reported
    cost function of each unit becomes factor * (c2 p^2 + c1 p + c0).
    """
    if factor <= 0.0:
        raise ValueError("cost scale factor must be positive")
    if area not in network.areas:
        raise KeyError(f"unknown area {area!r}")
    in_area = {b.id for b in network.buses if b.area == area}
    gens = tuple(
        replace(g, cost=g.cost.scaled(factor)) if g.bus in in_area else g
        for g in network.generators
    )
    return replace(network, generators=gens)


def _connected(bus_ids: list[str], lines: list[InternalLine]) -> bool:
    if not bus_ids:
        return True
    adj: dict[str, list[str]] = {b: [] for b in bus_ids}
    for ln in lines:
        if ln.from_bus in adj and ln.to_bus in adj:
            adj[ln.from_bus].append(ln.to_bus)
            adj[ln.to_bus].append(ln.from_bus)
    seen = {bus_ids[0]}
    stack = [bus_ids[0]]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == len(bus_ids)


def validate(network: Network, check_feasibility: bool = True) -> list[str]:
    """Check every structural invariant; return human-readable violations.

    An empty list means the network is well formed: unique ids, positive
    reactances and limits, internally connected areas, a valid slack bus,
    and (when ``check_feasibility``) each area able to meet its own load
    with all tieline flows forced to zero.
    """
    v: list[str] = []
    bus_ids = [b.id for b in network.buses]
    if len(set(bus_ids)) != len(bus_ids):
        v.append("duplicate bus ids")
    gen_ids = [g.id for g in network.generators]
    if len(set(gen_ids)) != len(gen_ids):
        v.append("duplicate generator ids")
    tid = [t.id for t in network.tielines]
    if len(set(tid)) != len(tid):
        v.append("duplicate tieline ids")
    if len(set(network.areas)) != len(network.areas):
        v.append("duplicate area ids")

    known = {b.id: b for b in network.buses}
    for b in network.buses:
        if b.area not in network.areas:
            v.append(f"bus {b.id}: unknown area {b.area}")
        if b.load < 0:
            v.append(f"bus {b.id}: negative load")
    for a in network.areas:
        if not any(b.area == a for b in network.buses):
            v.append(f"area {a}: has no buses")

    for g in network.generators:
        if g.bus not in known:
            v.append(f"generator {g.id}: unknown bus {g.bus}")
        if g.cost.c2 <= 0:
            v.append(f"generator {g.id}: c2 must be > 0 (strict convexity)")
        if not (0.0 <= g.p_min <= g.p_max):
            v.append(f"generator {g.id}: requires 0 <= p_min <= p_max")

    for ln in network.internal_lines:
        tag = f"line {ln.from_bus}-{ln.to_bus}"
        if ln.from_bus not in known or ln.to_bus not in known:
            v.append(f"{tag}: unknown endpoint")
            continue
        if known[ln.from_bus].area != known[ln.to_bus].area:
            v.append(f"{tag}: endpoints are in different areas")
        if ln.reactance <= 0:
            v.append(f"{tag}: reactance must be > 0")
        if ln.limit <= 0:
            v.append(f"{tag}: limit must be > 0")

    for t in network.tielines:
        tag = f"tieline {t.id}"
        for area, bus in ((t.from_area, t.from_bus), (t.to_area, t.to_bus)):
            if bus not in known:
                v.append(f"{tag}: unknown endpoint bus {bus}")
            elif known[bus].area != area:
                v.append(f"{tag}: bus {bus} is not in area {area}")
        if t.from_area == t.to_area:
            v.append(f"{tag}: both ends in area {t.from_area}")
        if t.reactance <= 0:
            v.append(f"{tag}: reactance must be > 0")
        if t.limit <= 0:
            v.append(f"{tag}: limit must be > 0")

    sa, sb = network.slack
    if sb not in known or known[sb].area != sa:
        v.append(f"slack ({sa}, {sb}) does not name an existing bus")

    for a in network.areas:
        ids = [b.id for b in network.buses if b.area == a]
        lines = [
            ln
            for ln in network.internal_lines
            if ln.from_bus in known
            and ln.to_bus in known
            and known[ln.from_bus].area == a
        ]
        if ids and not _connected(ids, lines):
            v.append(f"area {a}: internal line graph is not connected")

    if v or not check_feasibility:
        return v

    # Area feasibility (zero tieline flows), via the shared QP core.
    from .opf import area_feasibility

    for a in network.areas:
        feasible, worst = area_feasibility(network, a)
        if not feasible:
            v.append(
                f"area {a}: infeasible with tieline flows at zero "
                f"(worst constraint violation {worst:.3f} MW)"
            )
    return v
