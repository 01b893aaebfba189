"""Case files, the bundled three-area test case, and synthetic cases.

The case format is one human-readable YAML document. Units: MW for
power quantities, per-unit reactances on ``base_mva``, $/MWh prices;
cost coefficients are $/MW^2h, $/MWh, $/h. A case holds the network
sections plus an optional mechanism-configuration section and optional
per-area reporting overrides; loading validates the network and round
trips losslessly through :func:`save`.
"""

from __future__ import annotations

import numpy as np
import yaml

from .coupling import MechanismConfig
from .network import (
    Bus,
    Generator,
    InternalLine,
    Network,
    QuadraticCost,
    Tieline,
    validate,
)

__all__ = [
    "CaseError",
    "CaseIoError",
    "CaseParseError",
    "CaseValidationError",
    "SCHEMA_VERSION",
    "load",
    "loads",
    "save",
    "dumps",
    "rts_three_area",
    "rts_mechanism_config",
    "synth",
]

SCHEMA_VERSION = 1

RTS_ALIASES = {"rts", "rts96", "rts-96", "rts_three_area"}


class CaseError(Exception):
    pass


class CaseIoError(CaseError):
    pass


class CaseParseError(CaseError):
    pass


class CaseValidationError(CaseError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def _network_doc(network: Network) -> dict:
    doc: dict = {
        "version": SCHEMA_VERSION,
        "name": network.name,
        "base_mva": network.base_mva,
        "areas": list(network.areas),
        "slack": list(network.slack),
        "buses": [
            {"id": b.id, "area": b.area, "load": b.load} for b in network.buses
        ],
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "c2": g.cost.c2,
                "c1": g.cost.c1,
                "c0": g.cost.c0,
                "p_min": g.p_min,
                "p_max": g.p_max,
            }
            for g in network.generators
        ],
        "lines": [
            {"from": ln.from_bus, "to": ln.to_bus, "x": ln.reactance, "limit": ln.limit}
            for ln in network.internal_lines
        ],
        "tielines": [
            {
                "id": t.id,
                "from": [t.from_area, t.from_bus],
                "to": [t.to_area, t.to_bus],
                "x": t.reactance,
                "limit": t.limit,
            }
            for t in network.tielines
        ],
    }
    return doc


def dumps(
    network: Network,
    config: MechanismConfig | None = None,
    reporting: dict[str, float] | None = None,
) -> str:
    doc = _network_doc(network)
    if config is not None:
        doc["mechanism"] = {
            "beta": config.beta,
            "rho": config.rho,
            "mu0": config.mu0,
            "max_iterations": config.max_iterations,
            "stop": config.stop,
            "tol_flow": config.tol_flow,
            "tol_price": config.tol_price,
            "window": config.window,
        }
    if reporting:
        doc["reporting"] = dict(reporting)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def save(
    path,
    network: Network,
    config: MechanismConfig | None = None,
    reporting: dict[str, float] | None = None,
) -> None:
    try:
        with open(path, "w") as fh:
            fh.write(dumps(network, config, reporting))
    except OSError as exc:
        raise CaseIoError(str(exc)) from exc


def loads(
    text: str, check: bool = True
) -> tuple[Network, MechanismConfig | None, dict[str, float]]:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise CaseParseError(f"not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise CaseParseError("case document must be a mapping")
    try:
        network = Network(
            areas=tuple(doc["areas"]),
            buses=tuple(
                Bus(str(b["id"]), str(b["area"]), float(b.get("load", 0.0)))
                for b in doc.get("buses", [])
            ),
            generators=tuple(
                Generator(
                    str(g["id"]),
                    str(g["bus"]),
                    QuadraticCost(
                        float(g["c2"]), float(g["c1"]), float(g.get("c0", 0.0))
                    ),
                    float(g["p_min"]),
                    float(g["p_max"]),
                )
                for g in doc.get("generators", [])
            ),
            internal_lines=tuple(
                InternalLine(
                    str(ln["from"]), str(ln["to"]), float(ln["x"]), float(ln["limit"])
                )
                for ln in doc.get("lines", [])
            ),
            tielines=tuple(
                Tieline(
                    str(t["id"]),
                    str(t["from"][0]),
                    str(t["from"][1]),
                    str(t["to"][0]),
                    str(t["to"][1]),
                    float(t["x"]),
                    float(t["limit"]),
                )
                for t in doc.get("tielines", [])
            ),
            slack=tuple(doc.get("slack", ("", ""))),  # type: ignore[arg-type]
            base_mva=float(doc.get("base_mva", 100.0)),
            name=str(doc.get("name", "")),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CaseParseError(f"malformed case section: {exc!r}") from exc

    if check:
        violations = validate(network)
        if violations:
            raise CaseValidationError(violations)

    config = None
    if "mechanism" in doc:
        m = doc["mechanism"]
        try:
            config = MechanismConfig(
                beta=float(m.get("beta", 0.1)),
                rho=str(m.get("rho", "log")),
                mu0=m.get("mu0", 0.0)
                if isinstance(m.get("mu0", 0.0), dict)
                else float(m.get("mu0", 0.0)),
                max_iterations=int(m.get("max_iterations", 500)),
                stop=str(m.get("stop", "fixed")),
                tol_flow=float(m.get("tol_flow", 0.5)),
                tol_price=float(m.get("tol_price", 0.01)),
                window=int(m.get("window", 10)),
            )
        except (TypeError, ValueError) as exc:
            raise CaseParseError(f"malformed mechanism section: {exc!r}") from exc
    reporting = {
        str(a): float(f) for a, f in (doc.get("reporting") or {}).items()
    }
    return network, config, reporting


def load(
    path, check: bool = True
) -> tuple[Network, MechanismConfig | None, dict[str, float]]:
    """Load a case file; ``path`` may also be a bundled-case alias."""
    if isinstance(path, str) and path.lower() in RTS_ALIASES:
        return rts_three_area(), rts_mechanism_config(), {}
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise CaseIoError(str(exc)) from exc
    return loads(text, check=check)


# ---------------------------------------------------------------------------
# bundled cases
# ---------------------------------------------------------------------------


def rts_three_area() -> Network:
    """The bundled three-area 73-bus reliability test case."""
    from . import rts_data

    return rts_data.build()


def rts_mechanism_config() -> MechanismConfig:
    """Mechanism settings used for the bundled case experiments: constant
    price step 0.3, logarithmic inertia, prices started just above the
    most expensive unit's incremental cost."""
    return MechanismConfig(
        beta=0.3,
        rho="log",
        mu0=50.0,
        max_iterations=250,
        stop="fixed",
    )


# ---------------------------------------------------------------------------
# synthetic cases
# ---------------------------------------------------------------------------


def synth(
    seed: int,
    areas: int = 3,
    buses_per_area: int = 5,
    tielines: int = 3,
    cost_spread: float = 1.0,
) -> Network:
    """Deterministic random multi-area case.

    Areas carry a spanning-tree-plus-chords internal grid with generous
    line limits and a >= 20 % generation margin, so every area is feasible
    on its own. Tieline limits are drawn relative to the unconstrained
    interchange, leaving some ties congested at moderate shadow prices and
    others slack. ``areas == 1`` produces no tielines.

    ``cost_spread`` scales how far apart the areas' cost levels sit (1.0
    gives strongly heterogeneous economies with large interchanges; small
    values give nearly aligned markets that trade gently).
    """
    rng = np.random.default_rng(seed)
    if areas < 1:
        raise ValueError("areas must be >= 1")
    if buses_per_area < 1:
        raise ValueError("buses_per_area must be >= 1")
    names = [chr(ord("A") + i) for i in range(areas)]
    buses: list[Bus] = []
    gens: list[Generator] = []
    lines: list[InternalLine] = []

    for a in names:
        load_total = 0.0
        for i in range(1, buses_per_area + 1):
            load = float(rng.uniform(20.0, 120.0)) if rng.random() < 0.8 else 0.0
            load_total += load
            buses.append(Bus(f"{a}{i}", a, round(load, 3)))
        # spanning tree plus up to two chords
        for i in range(2, buses_per_area + 1):
            j = int(rng.integers(1, i))
            lines.append(
                InternalLine(
                    f"{a}{j}",
                    f"{a}{i}",
                    round(float(rng.uniform(0.03, 0.25)), 4),
                    round(load_total + 200.0, 1),
                )
            )
        for _ in range(int(rng.integers(0, 3))):
            i, j = rng.choice(np.arange(1, buses_per_area + 1), 2, replace=False)
            lines.append(
                InternalLine(
                    f"{a}{int(i)}",
                    f"{a}{int(j)}",
                    round(float(rng.uniform(0.03, 0.25)), 4),
                    round(load_total + 200.0, 1),
                )
            )
        # enough units for a 20 % margin with headroom above
        n_units = int(rng.integers(2, 4))
        cap_target = 1.35 * load_total + 50.0
        share = rng.dirichlet(np.ones(n_units))
        # areas differ systematically in their cost level so trade is useful
        base_c1 = 20.0 + max(0.0, cost_spread) * float(rng.uniform(-12.0, 12.0))
        for k in range(n_units):
            p_max = max(20.0, float(share[k]) * cap_target)
            gens.append(
                Generator(
                    id=f"{a}-g{k + 1}",
                    bus=f"{a}{int(rng.integers(1, buses_per_area + 1))}",
                    cost=QuadraticCost(
                        round(float(rng.uniform(0.02, 0.12)), 5),
                        round(base_c1 + float(rng.uniform(0.0, 10.0)), 3),
                        round(float(rng.uniform(0.0, 50.0)), 2),
                    ),
                    p_min=0.0,
                    p_max=round(p_max, 2),
                )
            )

    ties: list[Tieline] = []
    if areas > 1 and tielines > 0:
        pairs = []
        for i in range(1, areas):  # chain keeps the interconnection connected
            pairs.append((i - 1, i))
        while len(pairs) < tielines:
            i, j = rng.choice(np.arange(areas), 2, replace=False)
            pairs.append((min(int(i), int(j)), max(int(i), int(j))))
        pairs = pairs[:tielines]
        for k, (ia, ib) in enumerate(pairs, start=1):
            ties.append(
                Tieline(
                    id=f"T{k}",
                    from_area=names[ia],
                    from_bus=f"{names[ia]}{int(rng.integers(1, buses_per_area + 1))}",
                    to_area=names[ib],
                    to_bus=f"{names[ib]}{int(rng.integers(1, buses_per_area + 1))}",
                    reactance=round(float(rng.uniform(0.05, 0.2)), 4),
                    limit=1e6,  # sized below from the unconstrained interchange
                )
            )

    net = Network(
        areas=tuple(names),
        buses=tuple(buses),
        generators=tuple(gens),
        internal_lines=tuple(lines),
        tielines=tuple(ties),
        name=f"synth-{seed}",
    )
    if ties:
        net = _size_tielines(net, rng)
    return net


def _size_tielines(net: Network, rng: np.random.Generator) -> Network:
    """Draw tieline limits around the unconstrained interchange so the
    suite mixes slack ties with moderately congested ones.

    Several tight limits on meshed ties can be jointly unreachable (loop
    flows are set by angles, not chosen), so infeasible draws are relaxed
    until the case clears; limits covering the unconstrained interchange
    are always reachable.
    """
    from dataclasses import replace

    from .opf import solve_centralized
    from .qp import QpInfeasible

    free = solve_centralized(net)
    factors = []
    for t in net.tielines:
        natural = abs(free.flows[t.id])
        if natural < 2.0:
            factors.append((t, None, float(rng.uniform(10.0, 40.0))))
        else:
            factors.append((t, float(rng.uniform(0.75, 1.6)), natural))
    relax = 1.0
    for _ in range(5):
        ties = tuple(
            replace(t, limit=round(base if f is None else
                                   max(5.0, base * min(f * relax, 1.7)), 2))
            for t, f, base in factors
        )
        sized = replace(net, tielines=ties)
        try:
            solve_centralized(sized)
            return sized
        except QpInfeasible:
            relax *= 1.35
    # fully covering limits admit the unconstrained interchange
    ties = tuple(
        replace(t, limit=round(base if f is None else max(5.0, base * 1.7), 2))
        for t, f, base in factors
    )
    return replace(net, tielines=ties)
