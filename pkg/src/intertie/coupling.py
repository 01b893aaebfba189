"""Iterative tieline capacity allocation and pricing.

One round of the mechanism: every area clears itself against its
neighbors' previous published signals and the current capacity prices,
publishes desired flows, boundary angles and boundary prices; the
coordinator smooths the published signals with an inertial step rho_k and
moves each capacity price by beta times the tieline's average absolute
usage in excess of its limit, clamped at zero.

Iteration index conventions (mirrored by every trace array):

* row 0 is the pre-coupling state: zero flows/angles/prices published,
  stand-alone dispatch, initial capacity prices ``mu0``;
* rows 1..K are mechanism rounds; the round-k clearing reads smoothed
  signals from row k-1 and prices ``mu[k-1]``, and ``mu[k]`` is updated
  from the row-k smoothed flows.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .network import Network
from .opf import AreaResult, AreaSolver, StandaloneResult, stand_alone_clearing
from .qp import QpInfeasible

__all__ = [
    "MechanismConfig",
    "AreaTrace",
    "CouplingOutcome",
    "price_update",
    "inertia_update",
    "run",
    "run_excluded",
    "write_tieline_trace",
    "write_boundary_trace",
]


def price_update(mu_prev, t_a, t_a_prime, limit, beta):
    """One capacity-price step: excess average absolute usage, clamped at 0."""
    excess = 0.5 * (np.abs(t_a) + np.abs(t_a_prime)) - limit
    return np.maximum(mu_prev + beta * excess, 0.0)


def inertia_update(x_prev, x_hat, rho: float):
    """Convex combination (1 - rho) * previous + rho * new report."""
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    x_prev = np.asarray(x_prev, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x_prev.shape != x_hat.shape:
        raise ValueError("incompatible shapes in inertial update")
    return (1.0 - rho) * x_prev + rho * x_hat


@dataclass
class MechanismConfig:
    """Knobs of the coupling loop.

    ``rho="log"`` (1/(1+log k)) matches the reference experiments but has
    a non-summable square series, which the convergence theory does not
    cover; ``rho="harmonic"`` (1/k) is the theory-compliant alternative.
    """

    beta: float = 0.1  # capacity price step, in (0, 1)
    rho: str = "log"  # "log" | "harmonic"
    mu0: float | dict[str, float] = 0.0  # initial capacity price(s), $/MWh
    max_iterations: int = 500  # T; the loop performs T+1 clearing rounds
    stop: str = "fixed"  # "fixed" | "tolerance"
    tol_flow: float = 0.5  # MW: tieline consensus mismatch at termination
    tol_price: float = 0.01  # $/MWh: price drift across the stop window
    window: int = 10

    def check(self) -> None:
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.rho not in ("log", "harmonic"):
            raise ValueError("rho schedule must be 'log' or 'harmonic'")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.stop not in ("fixed", "tolerance"):
            raise ValueError("stop must be 'fixed' or 'tolerance'")
        if self.rho == "log":
            warnings.warn(
                "rho=log reproduces the reference experiments but its square "
                "series is not summable; use rho=harmonic for the "
                "theory-backed schedule",
                stacklevel=2,
            )

    def rho_at(self, k: int) -> float:
        if self.rho == "harmonic":
            return 1.0 / k
        return 1.0 / (1.0 + np.log(k))

    def mu0_for(self, tieline_ids: tuple[str, ...]) -> np.ndarray:
        if isinstance(self.mu0, dict):
            return np.array([float(self.mu0.get(t, 0.0)) for t in tieline_ids])
        return np.full(len(tieline_ids), float(self.mu0))


@dataclass
class AreaTrace:
    """Per-area series over iterations 0..K (see module docstring)."""

    area: str
    tieline_ids: tuple[str, ...]
    boundary_buses: tuple[str, ...]  # own endpoint bus per tieline
    t_hat: np.ndarray  # raw desired flows, own view (K+1, nt)
    theta_hat: np.ndarray
    alpha_hat: np.ndarray
    t: np.ndarray  # smoothed (published) counterparts
    theta: np.ndarray
    alpha: np.ndarray
    cost: np.ndarray  # (K+1,) internal cost under reported coefficients, $/h
    cost_true: np.ndarray  # same dispatch under true coefficients
    trade_value: np.ndarray  # r_k per the settlement formula
    value: np.ndarray  # optimal objective V_k = cost_k - trade_value_k
    gen_ids: tuple[str, ...] = ()
    final_dispatch: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class CouplingOutcome:
    """Everything recorded from one mechanism execution."""

    areas: tuple[str, ...]
    tieline_ids: tuple[str, ...]
    config: MechanismConfig
    traces: dict[str, AreaTrace]
    mu: np.ndarray  # (K+1, n_ties)
    mismatch: np.ndarray  # |T_a + T_a'| per tieline, smoothed views
    excess: np.ndarray  # (|T_a| + |T_a'|)/2 - Tbar, smoothed views
    cs_residual: np.ndarray  # mu * excess
    limits: np.ndarray  # Tbar per tieline
    converged: bool
    iterations: int  # K, number of clearing rounds performed
    reactances: dict[str, float] = field(default_factory=dict)
    excluded: str | None = None
    standalone: dict[str, StandaloneResult] = field(default_factory=dict)
    cost_factors: dict[str, float] = field(default_factory=dict)
    fallbacks: dict[str, int] = field(default_factory=dict)  # declined-trade rounds

    @property
    def k_final(self) -> int:
        return self.iterations

    def final_flow(self, tieline_id: str) -> float:
        """Consensus flow estimate in the tieline's registered direction."""
        # average the two end views (they agree at convergence)
        vals = []
        for trace in self.traces.values():
            if tieline_id in trace.tieline_ids:
                j = trace.tieline_ids.index(tieline_id)
                sign = self._end_sign(trace.area, tieline_id)
                vals.append(sign * trace.t[self.k_final, j])
        return float(np.mean(vals))

    def final_mu(self, tieline_id: str) -> float:
        return float(self.mu[self.k_final, self.tieline_ids.index(tieline_id)])

    def _end_sign(self, area: str, tieline_id: str) -> float:
        return self._end_signs[(area, tieline_id)]

    _end_signs: dict[tuple[str, str], float] = field(default_factory=dict)


def run(
    network: Network,
    config: MechanismConfig | None = None,
    reporting: dict[str, float] | None = None,
) -> CouplingOutcome:
    """Execute the coupling mechanism on ``network``.

    ``reporting`` maps area ids to cost scale factors (1.0 is equilibrium
    reporting). Non-convergence within the iteration budget is reported in
    the outcome flag, never raised.
    """
    config = config or MechanismConfig()
    config.check()
    reporting = dict(reporting or {})
    for a in reporting:
        if a not in network.areas:
            raise KeyError(f"reporting override for unknown area {a!r}")

    areas = tuple(network.areas)
    ties = tuple(network.tielines)
    tieline_ids = tuple(t.id for t in ties)
    n_ties = len(ties)
    limits = np.array([t.limit for t in ties])
    x_bar = {t.id: t.reactance for t in ties}

    solvers = {
        a: AreaSolver(network, a, cost_factor=reporting.get(a, 1.0)) for a in areas
    }
    standalone = {a: stand_alone_clearing(network, a) for a in areas}

    # side bookkeeping: global tieline index per (area, local tie position)
    tie_pos = {tid: i for i, tid in enumerate(tieline_ids)}
    end_signs: dict[tuple[str, str], float] = {}
    for a in areas:
        for e in solvers[a].ends:
            end_signs[(a, e.tieline.id)] = e.sign

    K = 1 if n_ties == 0 else config.max_iterations + 1
    mu = np.zeros((K + 1, n_ties))
    mu[0] = config.mu0_for(tieline_ids)
    mismatch = np.zeros((K + 1, n_ties))
    excess = np.zeros((K + 1, n_ties))
    excess[0] = -limits
    cs_residual = np.zeros((K + 1, n_ties))
    cs_residual[0] = mu[0] * excess[0]

    traces: dict[str, AreaTrace] = {}
    for a in areas:
        nt = solvers[a].nt
        z = np.zeros((K + 1, nt))
        factor = reporting.get(a, 1.0)
        tr = AreaTrace(
            area=a,
            tieline_ids=solvers[a].tieline_ids,
            boundary_buses=tuple(e.own_bus for e in solvers[a].ends),
            t_hat=z.copy(),
            theta_hat=z.copy(),
            alpha_hat=z.copy(),
            t=z.copy(),
            theta=z.copy(),
            alpha=z.copy(),
            cost=np.zeros(K + 1),
            cost_true=np.zeros(K + 1),
            trade_value=np.zeros(K + 1),
            value=np.zeros(K + 1),
        )
        tr.cost_true[0] = standalone[a].cost
        tr.cost[0] = factor * standalone[a].cost
        own_limits = np.array([network.tieline(t).limit for t in tr.tieline_ids])
        tr.trade_value[0] = float(
            0.5 * mu[0][[tie_pos[t] for t in tr.tieline_ids]] @ own_limits
        ) if nt else 0.0
        tr.value[0] = tr.cost[0] - tr.trade_value[0]
        traces[a] = tr

    converged = False
    k_done = 0
    fallbacks = {a: 0 for a in areas}
    mu_window: list[np.ndarray] = [mu[0].copy()]
    for k in range(1, K + 1):
        rho = config.rho_at(k)
        for a in areas:
            solver = solvers[a]
            tr = traces[a]
            nt = solver.nt
            alpha_nb = np.zeros(nt)
            theta_nb = np.zeros(nt)
            mu_own = np.zeros(nt)
            for j, e in enumerate(solver.ends):
                nb_tr = traces[e.neighbor_area]
                jj = nb_tr.tieline_ids.index(e.tieline.id)
                alpha_nb[j] = nb_tr.alpha[k - 1, jj]
                theta_nb[j] = nb_tr.theta[k - 1, jj]
                mu_own[j] = mu[k - 1, tie_pos[e.tieline.id]]
            try:
                res = solver.solve(alpha_nb, theta_nb, mu_own)
            except QpInfeasible:
                # the quoted neighbor angle profile is unrealizable inside
                # this area's limits: decline to trade this round
                res = _no_trade_report(
                    solver, standalone[a], alpha_nb, theta_nb, mu_own
                )
                fallbacks[a] += 1
            tr.t_hat[k] = res.flows
            tr.theta_hat[k] = res.theta_b
            tr.alpha_hat[k] = res.alpha_b
            tr.cost[k] = res.cost
            tr.cost_true[k] = res.cost_true
            tr.trade_value[k] = res.trade_value
            tr.value[k] = res.value
            if k == K:
                tr.gen_ids = res.gen_ids
                tr.final_dispatch = res.dispatch
        for a in areas:
            tr = traces[a]
            tr.t[k] = inertia_update(tr.t[k - 1], tr.t_hat[k], rho)
            tr.theta[k] = inertia_update(tr.theta[k - 1], tr.theta_hat[k], rho)
            tr.alpha[k] = inertia_update(tr.alpha[k - 1], tr.alpha_hat[k], rho)
        for i, t in enumerate(ties):
            ta = traces[t.from_area]
            tb = traces[t.to_area]
            fa = ta.t[k, ta.tieline_ids.index(t.id)]
            fb = tb.t[k, tb.tieline_ids.index(t.id)]
            mu[k, i] = price_update(mu[k - 1, i], fa, fb, t.limit, config.beta)
            mismatch[k, i] = abs(fa + fb)
            excess[k, i] = 0.5 * (abs(fa) + abs(fb)) - t.limit
            cs_residual[k, i] = mu[k, i] * excess[k, i]
        k_done = k
        if n_ties == 0:
            converged = True
            break
        mu_window.append(mu[k].copy())
        if len(mu_window) > config.window + 1:
            mu_window.pop(0)
        if config.stop == "tolerance" and k >= config.window + 1:
            drift = np.max(np.ptp(np.stack(mu_window), axis=0))
            if np.max(mismatch[k]) < config.tol_flow and drift < config.tol_price:
                converged = True
                break

    if n_ties and not converged:
        cs_scale = 1e-3 * np.maximum(1.0, mu[k_done] * limits)
        converged = bool(
            np.max(mismatch[k_done], initial=0.0) <= config.tol_flow
            and np.all(np.abs(cs_residual[k_done]) <= cs_scale)
        )

    keep = k_done + 1
    for tr in traces.values():
        for name in (
            "t_hat", "theta_hat", "alpha_hat", "t", "theta", "alpha",
            "cost", "cost_true", "trade_value", "value",
        ):
            setattr(tr, name, getattr(tr, name)[:keep])
        if not len(tr.gen_ids):
            # loop ended early; re-derive final dispatch bookkeeping lazily
            tr.gen_ids = tuple(g.id for g in solvers[tr.area].gens)

    outcome = CouplingOutcome(
        areas=areas,
        tieline_ids=tieline_ids,
        config=config,
        traces=traces,
        mu=mu[:keep],
        mismatch=mismatch[:keep],
        excess=excess[:keep],
        cs_residual=cs_residual[:keep],
        limits=limits,
        converged=converged,
        iterations=k_done,
        reactances={t.id: t.reactance for t in ties},
        standalone=standalone,
        cost_factors={a: reporting.get(a, 1.0) for a in areas},
        fallbacks=fallbacks,
    )
    outcome._end_signs = end_signs
    return outcome


def _no_trade_report(
    solver: AreaSolver,
    standalone: StandaloneResult,
    alpha_nb: np.ndarray,
    theta_nb: np.ndarray,
    mu: np.ndarray,
) -> AreaResult:
    """Zero-trade report used when an area's subproblem is infeasible.

    Reports zero desired flows, boundary angles matching the neighbors'
    quotes (consistent with zero flow), and the stand-alone boundary
    prices; the value keeps the cost-minus-trade identity.
    """
    limits = np.array([e.tieline.limit for e in solver.ends])
    alpha_b = np.array([standalone.lmps[e.own_bus] for e in solver.ends])
    cost = solver.cost_factor * standalone.cost
    trade = float(0.5 * mu @ limits)
    return AreaResult(
        area=solver.area,
        tieline_ids=solver.tieline_ids,
        flows=np.zeros(solver.nt),
        theta_b=theta_nb.copy(),
        alpha_b=alpha_b,
        xi=alpha_nb - 0.5 * mu - alpha_b,
        gen_ids=tuple(g.id for g in solver.gens),
        dispatch=np.array(standalone.dispatch, dtype=float),
        cost=cost,
        cost_true=standalone.cost,
        trade_value=trade,
        value=cost - trade,
        lmps=dict(standalone.lmps),
        tie_upper_dual=np.zeros(solver.nt),
        tie_lower_dual=np.zeros(solver.nt),
        qp=None,  # type: ignore[arg-type]
    )


def run_excluded(
    network: Network,
    config: MechanismConfig | None = None,
    excluded: str = "",
    reporting: dict[str, float] | None = None,
) -> CouplingOutcome:
    """Run the mechanism with ``excluded`` out of the coupling.

    The excluded area's interties are frozen at their pre-coupling (zero)
    exchanges, so the remaining areas couple among themselves; the
    excluded area itself stays at its stand-alone clearing.
    """
    if excluded not in network.areas:
        raise KeyError(f"unknown area {excluded!r}")
    sub = network.without_area(excluded)
    reporting = {
        a: f for a, f in (reporting or {}).items() if a in sub.areas
    }
    out = run(sub, config, reporting)
    out.excluded = excluded
    return out


# ---------------------------------------------------------------------------
# trace export
# ---------------------------------------------------------------------------


def write_tieline_trace(outcome: CouplingOutcome, path) -> None:
    """One row per iteration per tieline: both end flows, price, mismatch."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "tieline", "t_from", "t_to", "mu", "mismatch"])
        by_area = outcome.traces
        for k in range(outcome.iterations + 1):
            for i, tid in enumerate(outcome.tieline_ids):
                sides = {}
                for a, tr in by_area.items():
                    if tid in tr.tieline_ids:
                        sides[outcome._end_signs[(a, tid)]] = tr.t[
                            k, tr.tieline_ids.index(tid)
                        ]
                w.writerow(
                    [
                        k,
                        tid,
                        _fmt(sides.get(1.0, 0.0)),
                        _fmt(sides.get(-1.0, 0.0)),
                        _fmt(outcome.mu[k, i]),
                        _fmt(outcome.mismatch[k, i]),
                    ]
                )


def write_boundary_trace(outcome: CouplingOutcome, path) -> None:
    """One row per iteration per boundary bus: published price and angle."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "area", "bus", "alpha", "theta"])
        for k in range(outcome.iterations + 1):
            seen: set[str] = set()
            for a in outcome.areas:
                tr = outcome.traces[a]
                for j, bus in enumerate(tr.boundary_buses):
                    if bus in seen:
                        continue  # a bus hosting several tielines publishes once
                    seen.add(bus)
                    w.writerow([k, a, bus, _fmt(tr.alpha[k, j]), _fmt(tr.theta[k, j])])


def _fmt(x: float) -> str:
    return format(float(x), ".10g")
