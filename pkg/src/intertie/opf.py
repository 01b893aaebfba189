"""Centralized and per-area DC optimal power flow.

Two problem families share one QP core:

* ``solve_centralized`` clears every area jointly, with one flow variable
  per tieline (both end views read the same variable with opposite sign).
  Its balance duals, tieline-limit duals and coupling duals are the oracle
  against which the iterative mechanism is validated.

* ``AreaSolver`` / ``solve_area`` clear a single area given its neighbors'
  boundary prices and angles plus a capacity price per incident tieline.
  The tieline usage charge (mu/2)(|T| - Tbar) is made quadratic-programming
  compatible by splitting T = Tp - Tm with Tp, Tm >= 0 and charging
  (mu/2)(Tp + Tm); for mu >= 0 at most one of the pair is active at an
  optimum, so the split is exact. No capacity bound is imposed on the
  area's desired flows: scarcity is priced, not constrained.

Area problems keep the constant term -(mu/2)*Tbar in their reported
optimal value, so value == internal cost - trade value holds identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network, TielineEnd
from .qp import PreparedQp, QpProblem, QpSolution, solve as qp_solve, feasibility_solve

__all__ = [
    "AreaInput",
    "AreaResult",
    "AreaSolver",
    "CentralizedSolution",
    "ExcludedSolution",
    "StandaloneResult",
    "solve_area",
    "solve_centralized",
    "solve_centralized_excluding",
    "stand_alone_clearing",
    "area_feasibility",
    "critical_price_bound",
]


# ---------------------------------------------------------------------------
# per-area subproblem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AreaInput:
    """Signals one area needs to clear itself, keyed by tieline id.

    ``alpha_nb`` and ``theta_nb`` are the neighbor-end boundary price and
    angle for each incident tieline; ``mu`` is the shared capacity price.
    ``cost_factor`` scales every cost coefficient, which is how scaled
    reporting strategies are expressed.
    """

    area: str
    alpha_nb: dict[str, float]
    theta_nb: dict[str, float]
    mu: dict[str, float]
    cost_factor: float = 1.0


@dataclass
class AreaResult:
    """One area's clearing outcome: reports plus private bookkeeping."""

    area: str
    tieline_ids: tuple[str, ...]
    flows: np.ndarray  # desired tieline flows, own view (export > 0), MW
    theta_b: np.ndarray  # own boundary bus angle per tieline, rad
    alpha_b: np.ndarray  # own boundary bus price per tieline, $/MWh
    xi: np.ndarray  # coupling-constraint duals per tieline
    gen_ids: tuple[str, ...]
    dispatch: np.ndarray  # MW
    cost: float  # internal cost under the reported (possibly scaled) costs, $/h
    cost_true: float  # same dispatch under the true cost functions, $/h
    trade_value: float  # r = sum a'T - sum (mu/2)(|T| - Tbar), $/h
    value: float  # optimal objective V = cost - trade_value, $/h
    lmps: dict[str, float]
    tie_upper_dual: np.ndarray  # only for internalized-limit diagnostics
    tie_lower_dual: np.ndarray
    qp: QpSolution

    def flow_of(self, tieline_id: str) -> float:
        return float(self.flows[self.tieline_ids.index(tieline_id)])


class AreaSolver:
    """Prebuilt QP structure for one area's clearing problem.

    The constraint matrices depend only on the network, so the mechanism
    loop rebuilds just the linear cost vector and the tieline-anchor right
    hand side at each iteration.

    ``internalize_limits`` adds the area's own +-Tbar bounds on desired
    flows (the no-shared-price decomposition used as a negative example);
    the default prices capacity instead of constraining it.
    """

    def __init__(
        self,
        network: Network,
        area: str,
        cost_factor: float = 1.0,
        include_ties: bool = True,
        internalize_limits: bool = False,
    ):
        if area not in network.areas:
            raise KeyError(f"unknown area {area!r}")
        self.network = network
        self.area = area
        self.cost_factor = float(cost_factor)
        self.internalize_limits = internalize_limits
        self.buses = network.buses_in(area)
        self.gens = network.generators_in(area)
        self.lines = network.lines_in(area)
        self.ends: tuple[TielineEnd, ...] = (
            network.tieline_ends(area) if include_ties else ()
        )
        self.tieline_ids = tuple(e.tieline.id for e in self.ends)

        nb, ng, nt = len(self.buses), len(self.gens), len(self.ends)
        self.nb, self.ng, self.nt = nb, ng, nt
        self._bus_idx = {b.id: i for i, b in enumerate(self.buses)}
        n = nb + ng + 2 * nt  # theta, P, Tp, Tm
        self.n = n
        self._i_theta = np.arange(nb)
        self._i_p = nb + np.arange(ng)
        self._i_tp = nb + ng + np.arange(nt)
        self._i_tm = nb + ng + nt + np.arange(nt)

        f = self.cost_factor
        Q = np.zeros((n, n))
        c0 = 0.0
        c_base = np.zeros(n)
        for k, g in enumerate(self.gens):
            Q[self._i_p[k], self._i_p[k]] = 2.0 * g.cost.c2 * f
            c_base[self._i_p[k]] = g.cost.c1 * f
            c0 += g.cost.c0 * f
        self.Q = Q
        self.c_base = c_base
        self.cost_constant = c0

        # equalities: nodal balance, tieline anchors, optional reference pin
        rows: list[np.ndarray] = []
        b_rows: list[float] = []
        for b in self.buses:
            rows.append(np.zeros(n))
            b_rows.append(-b.load)
        for ln in self.lines:
            i, j = self._bus_idx[ln.from_bus], self._bus_idx[ln.to_bus]
            w = 1.0 / ln.reactance
            rows[i][self._i_theta[i]] += w
            rows[i][self._i_theta[j]] -= w
            rows[j][self._i_theta[j]] += w
            rows[j][self._i_theta[i]] -= w
        for k, g in enumerate(self.gens):
            rows[self._bus_idx[g.bus]][self._i_p[k]] = -1.0
        for k, e in enumerate(self.ends):
            i = self._bus_idx[e.own_bus]
            rows[i][self._i_tp[k]] += 1.0
            rows[i][self._i_tm[k]] -= 1.0
        self._n_balance = nb
        # anchor: Tp - Tm - theta_own/xbar = -theta_nb/xbar
        for k, e in enumerate(self.ends):
            r = np.zeros(n)
            r[self._i_tp[k]] = 1.0
            r[self._i_tm[k]] = -1.0
            r[self._i_theta[self._bus_idx[e.own_bus]]] = -1.0 / e.tieline.reactance
            rows.append(r)
            b_rows.append(0.0)  # filled per solve
        self._tie_rows = nb + np.arange(nt)
        # The reference area pins its slack bus; an area with no tielines has
        # a free angle level and pins its first bus. Tied non-reference areas
        # are anchored through the tieline rows instead. Note the pinned
        # area's subproblem can be infeasible if neighbors publish an angle
        # level it cannot meet within its line limits; the mechanism then
        # falls back to a no-trade report for that round.
        pin = None
        if network.slack[0] == area:
            pin = self._bus_idx[network.slack[1]]
        elif nt == 0:
            pin = 0
        if pin is not None:
            r = np.zeros(n)
            r[self._i_theta[pin]] = 1.0
            rows.append(r)
            b_rows.append(0.0)
        self.A = np.vstack(rows)
        self.b_base = np.array(b_rows)

        # inequalities: generator limits, line limits (both senses), T split signs
        g_rows: list[np.ndarray] = []
        h_rows: list[float] = []
        for k, g in enumerate(self.gens):
            r = np.zeros(n)
            r[self._i_p[k]] = 1.0
            g_rows.append(r)
            h_rows.append(g.p_max)
            g_rows.append(-r)
            h_rows.append(-g.p_min)
        self._line_rows = len(g_rows)
        for ln in self.lines:
            r = np.zeros(n)
            r[self._i_theta[self._bus_idx[ln.from_bus]]] = 1.0 / ln.reactance
            r[self._i_theta[self._bus_idx[ln.to_bus]]] = -1.0 / ln.reactance
            g_rows.append(r)
            h_rows.append(ln.limit)
            g_rows.append(-r)
            h_rows.append(ln.limit)
        for idx in (*self._i_tp, *self._i_tm):
            r = np.zeros(n)
            r[idx] = -1.0
            g_rows.append(r)
            h_rows.append(0.0)
        self._tie_limit_rows = len(g_rows)
        if internalize_limits:
            for k, e in enumerate(self.ends):
                r = np.zeros(n)
                r[self._i_tp[k]] = 1.0
                r[self._i_tm[k]] = -1.0
                g_rows.append(r)
                h_rows.append(e.tieline.limit)
                g_rows.append(-r)
                h_rows.append(e.tieline.limit)
        self.G = np.vstack(g_rows)
        self.h = np.array(h_rows)
        self._prepared = PreparedQp(self.Q, self.A, self.G, self.h)

    # -- assembly ---------------------------------------------------------

    def _ordered(self, table: dict[str, float]) -> np.ndarray:
        return np.array([table[tid] for tid in self.tieline_ids])

    def build_problem(
        self, alpha_nb: np.ndarray, theta_nb: np.ndarray, mu: np.ndarray
    ) -> tuple[QpProblem, float]:
        """Problem plus the objective constant (cost c0 terms and -mu*Tbar/2)."""
        c = self.c_base.copy()
        c[self._i_tp] = -alpha_nb + 0.5 * mu
        c[self._i_tm] = alpha_nb + 0.5 * mu
        b = self.b_base.copy()
        const = self.cost_constant
        for k, e in enumerate(self.ends):
            b[self._tie_rows[k]] = -theta_nb[k] / e.tieline.reactance
            const -= 0.5 * mu[k] * e.tieline.limit
        return QpProblem(self.Q, c, self.A, b, self.G, self.h), const

    def solve(
        self,
        alpha_nb: np.ndarray,
        theta_nb: np.ndarray,
        mu: np.ndarray,
        warm_start: np.ndarray | None = None,
    ) -> AreaResult:
        c = self.c_base.copy()
        c[self._i_tp] = -alpha_nb + 0.5 * mu
        c[self._i_tm] = alpha_nb + 0.5 * mu
        b = self.b_base.copy()
        for k, e in enumerate(self.ends):
            b[self._tie_rows[k]] = -theta_nb[k] / e.tieline.reactance
        sol = self._prepared.solve(c, b, warm_start=warm_start)
        theta = sol.x[self._i_theta]
        p = sol.x[self._i_p]
        flows = sol.x[self._i_tp] - sol.x[self._i_tm]
        lmps = {b.id: float(sol.y[i]) for i, b in enumerate(self.buses)}
        own_bus_idx = np.array(
            [self._bus_idx[e.own_bus] for e in self.ends], dtype=int
        )
        limits = np.array([e.tieline.limit for e in self.ends])
        trade = float(
            alpha_nb @ flows - 0.5 * mu @ (np.abs(flows) - limits)
        ) if self.nt else 0.0
        cost = self._cost(p, scaled=True)
        cost_true = self._cost(p, scaled=False)
        nt = self.nt
        upper = np.zeros(nt)
        lower = np.zeros(nt)
        if self.internalize_limits and nt:
            base = self._tie_limit_rows
            upper = sol.z[base : base + 2 * nt : 2].copy()
            lower = sol.z[base + 1 : base + 2 * nt : 2].copy()
        return AreaResult(
            area=self.area,
            tieline_ids=self.tieline_ids,
            flows=flows,
            theta_b=theta[own_bus_idx] if nt else np.zeros(0),
            alpha_b=sol.y[own_bus_idx] if nt else np.zeros(0),
            xi=sol.y[self._tie_rows].copy() if nt else np.zeros(0),
            gen_ids=tuple(g.id for g in self.gens),
            dispatch=p,
            cost=cost,
            cost_true=cost_true,
            trade_value=trade,
            value=cost - trade,
            lmps=lmps,
            tie_upper_dual=upper,
            tie_lower_dual=lower,
            qp=sol,
        )

    def _cost(self, p: np.ndarray, scaled: bool) -> float:
        f = self.cost_factor if scaled else 1.0
        return f * float(
            sum(g.cost.value(p[k]) for k, g in enumerate(self.gens))
        )

    def solve_input(self, inp: AreaInput, warm_start=None) -> AreaResult:
        return self.solve(
            self._ordered(inp.alpha_nb),
            self._ordered(inp.theta_nb),
            self._ordered(inp.mu),
            warm_start=warm_start,
        )


def solve_area(network: Network, inp: AreaInput) -> AreaResult:
    """Clear one area against the given neighbor signals and capacity prices."""
    solver = AreaSolver(network, inp.area, cost_factor=inp.cost_factor)
    return solver.solve_input(inp)


# ---------------------------------------------------------------------------
# stand-alone clearing
# ---------------------------------------------------------------------------


@dataclass
class StandaloneResult:
    area: str
    gen_ids: tuple[str, ...]
    dispatch: np.ndarray
    cost: float  # $/h
    lmps: dict[str, float]

    def dispatch_map(self) -> dict[str, float]:
        return {gid: float(p) for gid, p in zip(self.gen_ids, self.dispatch)}


def stand_alone_clearing(network: Network, area: str) -> StandaloneResult:
    """Clear one area with every tieline flow forced to zero."""
    solver = AreaSolver(network, area, include_ties=False)
    res = solver.solve(np.zeros(0), np.zeros(0), np.zeros(0))
    return StandaloneResult(
        area=area,
        gen_ids=res.gen_ids,
        dispatch=res.dispatch,
        cost=res.cost,
        lmps=res.lmps,
    )


def area_feasibility(network: Network, area: str) -> tuple[bool, float]:
    """Feasibility of one area's clearing with zero tieline flows."""
    solver = AreaSolver(network, area, include_ties=False)
    problem, _ = solver.build_problem(np.zeros(0), np.zeros(0), np.zeros(0))
    return feasibility_solve(problem)


def critical_price_bound(network: Network, alpha_scale: float = 0.0) -> float:
    """A capacity price above which no area desires any tieline flow.

    Importing one MW saves at most the highest stand-alone marginal price
    and exporting earns at most the quoted neighbor price, so half of the
    returned bound exceeds every possible per-MW trading gain when quoted
    prices stay within ``alpha_scale``.
    """
    lmp_max = 0.0
    for a in network.areas:
        res = stand_alone_clearing(network, a)
        lmp_max = max(lmp_max, max(abs(p) for p in res.lmps.values()))
    return 2.0 * (lmp_max + max(alpha_scale, 0.0)) + 1.0


# ---------------------------------------------------------------------------
# centralized clearing
# ---------------------------------------------------------------------------


@dataclass
class CentralizedSolution:
    """Joint clearing of all areas; the oracle for the iterative mechanism.

    ``flows`` are in each tieline's registered direction; view them from a
    specific area with :meth:`flow_view`. ``capacity_prices`` are the
    mechanism-comparable prices 2*(upper dual + lower dual) per tieline.
    """

    dispatch: dict[str, float]
    angles: dict[str, float]
    lmps: dict[str, float]
    flows: dict[str, float]
    xi: dict[str, float]
    tie_upper_dual: dict[str, float]
    tie_lower_dual: dict[str, float]
    capacity_prices: dict[str, float]
    line_upper_dual: np.ndarray  # aligned with network.internal_lines
    line_lower_dual: np.ndarray
    area_costs: dict[str, float]
    total_cost: float
    qp: QpSolution

    def cost_excluding(self, area: str) -> float:
        return self.total_cost - self.area_costs[area]

    def flow_view(self, network: Network, tieline_id: str, area: str) -> float:
        end = TielineEnd(network.tieline(tieline_id), area)
        return end.sign * self.flows[tieline_id]

    def boundary_lmp(self, network: Network, tieline_id: str, area: str) -> float:
        end = TielineEnd(network.tieline(tieline_id), area)
        return self.lmps[end.own_bus]


def solve_centralized(network: Network) -> CentralizedSolution:
    """Solve the joint DC-OPF across all areas and recover every multiplier."""
    buses = network.buses
    gens = network.generators
    ties = network.tielines
    nb, ng, nt = len(buses), len(gens), len(ties)
    bus_idx = {b.id: i for i, b in enumerate(buses)}
    n = nb + ng + nt
    i_theta = np.arange(nb)
    i_p = nb + np.arange(ng)
    i_t = nb + ng + np.arange(nt)

    Q = np.zeros((n, n))
    c = np.zeros(n)
    const = 0.0
    for k, g in enumerate(gens):
        Q[i_p[k], i_p[k]] = 2.0 * g.cost.c2
        c[i_p[k]] = g.cost.c1
        const += g.cost.c0

    rows = [np.zeros(n) for _ in range(nb)]
    rhs = [-b.load for b in buses]
    for ln in network.internal_lines:
        i, j = bus_idx[ln.from_bus], bus_idx[ln.to_bus]
        w = 1.0 / ln.reactance
        rows[i][i_theta[i]] += w
        rows[i][i_theta[j]] -= w
        rows[j][i_theta[j]] += w
        rows[j][i_theta[i]] -= w
    for k, g in enumerate(gens):
        rows[bus_idx[g.bus]][i_p[k]] = -1.0
    for k, t in enumerate(ties):
        rows[bus_idx[t.from_bus]][i_t[k]] += 1.0
        rows[bus_idx[t.to_bus]][i_t[k]] -= 1.0
    for k, t in enumerate(ties):  # T - (theta_i - theta_j)/xbar = 0
        r = np.zeros(n)
        r[i_t[k]] = 1.0
        r[i_theta[bus_idx[t.from_bus]]] = -1.0 / t.reactance
        r[i_theta[bus_idx[t.to_bus]]] = 1.0 / t.reactance
        rows.append(r)
        rhs.append(0.0)
    tie_rows = nb + np.arange(nt)

    for ref_bus in _reference_buses(network):
        r = np.zeros(n)
        r[i_theta[bus_idx[ref_bus]]] = 1.0
        rows.append(r)
        rhs.append(0.0)

    A = np.vstack(rows)
    b = np.array(rhs)

    g_rows: list[np.ndarray] = []
    h_rows: list[float] = []
    for k, g in enumerate(gens):
        r = np.zeros(n)
        r[i_p[k]] = 1.0
        g_rows.append(r)
        h_rows.append(g.p_max)
        g_rows.append(-r)
        h_rows.append(-g.p_min)
    line_base = len(g_rows)
    for ln in network.internal_lines:
        r = np.zeros(n)
        r[i_theta[bus_idx[ln.from_bus]]] = 1.0 / ln.reactance
        r[i_theta[bus_idx[ln.to_bus]]] = -1.0 / ln.reactance
        g_rows.append(r)
        h_rows.append(ln.limit)
        g_rows.append(-r)
        h_rows.append(ln.limit)
    tie_base = len(g_rows)
    for k, t in enumerate(ties):
        r = np.zeros(n)
        r[i_t[k]] = 1.0
        g_rows.append(r)
        h_rows.append(t.limit)
        g_rows.append(-r)
        h_rows.append(t.limit)

    problem = QpProblem(Q, c, A, b, np.vstack(g_rows), np.array(h_rows))
    sol = qp_solve(problem)

    nl = len(network.internal_lines)
    line_upper = sol.z[line_base : line_base + 2 * nl : 2].copy()
    line_lower = sol.z[line_base + 1 : line_base + 2 * nl : 2].copy()
    tie_upper = {t.id: float(sol.z[tie_base + 2 * k]) for k, t in enumerate(ties)}
    tie_lower = {t.id: float(sol.z[tie_base + 2 * k + 1]) for k, t in enumerate(ties)}

    area_costs = {a: 0.0 for a in network.areas}
    for k, g in enumerate(gens):
        area_costs[network.bus(g.bus).area] += g.cost.value(float(sol.x[i_p[k]]))
    total = sum(area_costs.values())

    return CentralizedSolution(
        dispatch={g.id: float(sol.x[i_p[k]]) for k, g in enumerate(gens)},
        angles={bs.id: float(sol.x[i_theta[i]]) for i, bs in enumerate(buses)},
        lmps={bs.id: float(sol.y[i]) for i, bs in enumerate(buses)},
        flows={t.id: float(sol.x[i_t[k]]) for k, t in enumerate(ties)},
        xi={t.id: float(sol.y[tie_rows[k]]) for k, t in enumerate(ties)},
        tie_upper_dual=tie_upper,
        tie_lower_dual=tie_lower,
        capacity_prices={
            t.id: 2.0 * (tie_upper[t.id] + tie_lower[t.id]) for t in ties
        },
        line_upper_dual=line_upper,
        line_lower_dual=line_lower,
        area_costs=area_costs,
        total_cost=total,
        qp=sol,
    )


def _reference_buses(network: Network) -> list[str]:
    """One angle reference per connected component of the interconnection."""
    comp = {a: a for a in network.areas}

    def find(a):
        while comp[a] != a:
            comp[a] = comp[comp[a]]
            a = comp[a]
        return a

    for t in network.tielines:
        ra, rb = find(t.from_area), find(t.to_area)
        if ra != rb:
            comp[rb] = ra
    groups: dict[str, list[str]] = {}
    for a in network.areas:
        groups.setdefault(find(a), []).append(a)
    refs = []
    slack_area, slack_bus = network.slack
    for members in groups.values():
        if slack_area in members:
            refs.append(slack_bus)
        else:
            refs.append(network.buses_in(members[0])[0].id)
    return refs


# ---------------------------------------------------------------------------
# clearing without one area
# ---------------------------------------------------------------------------


@dataclass
class ExcludedSolution:
    """Joint clearing of all areas but one, with the excluded area's
    tieline exchanges frozen and its dispatch at the matching stand-alone
    clearing."""

    excluded: str
    fixed_flows: dict[str, float]  # excluded-area view, export > 0
    area_costs: dict[str, float]  # all areas, including the excluded one
    cost_excluded: float
    cost_others: float  # the C-tilde_{-a} aggregate
    total_cost: float
    inner: CentralizedSolution | StandaloneResult


def solve_centralized_excluding(
    network: Network,
    area: str,
    fixed_flows: dict[str, float] | None = None,
) -> ExcludedSolution:
    """Clear the system with ``area`` out of the coupling.

    ``fixed_flows`` pins the excluded area's exchanges (default: all zero,
    the pre-coupling state). Frozen exports show up as injections at the
    neighbor end and as extra demand at the excluded end.
    """
    ends = network.tieline_ends(area)
    fixed = {e.tieline.id: 0.0 for e in ends}
    if fixed_flows:
        unknown = set(fixed_flows) - set(fixed)
        if unknown:
            raise KeyError(f"flows given for non-incident tielines: {sorted(unknown)}")
        fixed.update(fixed_flows)

    # excluded area: exports add to its own balance as extra demand
    own_deltas: dict[str, float] = {}
    nb_deltas: dict[str, float] = {}
    for e in ends:
        f = fixed[e.tieline.id]
        own_deltas[e.own_bus] = own_deltas.get(e.own_bus, 0.0) + f
        nb_deltas[e.neighbor_bus] = nb_deltas.get(e.neighbor_bus, 0.0) - f
    own = stand_alone_clearing(network.with_loads(own_deltas), area)

    rest = network.without_area(area).with_loads(nb_deltas)
    if len(rest.areas) == 1 and not rest.tielines:
        inner_res = stand_alone_clearing(rest, rest.areas[0])
        area_costs = {rest.areas[0]: inner_res.cost}
        inner: CentralizedSolution | StandaloneResult = inner_res
    else:
        inner = solve_centralized(rest)
        area_costs = dict(inner.area_costs)
    cost_others = sum(area_costs.values())
    area_costs[area] = own.cost
    return ExcludedSolution(
        excluded=area,
        fixed_flows=fixed,
        area_costs=area_costs,
        cost_excluded=own.cost,
        cost_others=cost_others,
        total_cost=cost_others + own.cost,
        inner=inner,
    )
