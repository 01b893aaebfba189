"""Incentive transfers, participation fees and settlement accounting.

The mechanism pays each area (an estimate of) its marginal contribution
to the coupling: the cost change its participation induces on everyone
else. Computing the estimate needs one extra mechanism execution per
area, run on the coupling with that area left out.

Accounting conventions, chosen so the books close exactly at the
pre-coupling state and at convergence:

* Per-iteration trade values r_k follow the settlement formula
  ``sum a'_nb T_hat - sum (mu/2)(|T_hat| - Tbar)`` against the previous
  iteration's published prices. The k = 0 row evaluates it at the frozen
  zero exchanges, giving ``sum (mu0/2) Tbar``.
* Envelope estimates of value changes differentiate the actual area
  objective; in particular the capacity-price derivative is
  ``(|T_hat| - Tbar)/2``, keeping the estimates exact to second order
  even while prices move. Setting ``envelope="published"`` drops the
  Tbar term for comparison runs.
* Settlement normalizes the pre-coupling trade value to zero (prices are
  zero before coupling starts), so an area's headline cost reduction is
  measured against its stand-alone cost and the mechanism budget
  telescopes to fees + contributions + final trade values.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coupling import CouplingOutcome, MechanismConfig, run, run_excluded
from .network import Network
from .opf import (
    CentralizedSolution,
    ExcludedSolution,
    solve_centralized,
    solve_centralized_excluding,
    stand_alone_clearing,
)

__all__ = [
    "MissingExcludedRun",
    "OracleBundle",
    "AreaSettlement",
    "Settlement",
    "PipelineResult",
    "DeviationReport",
    "LmpReport",
    "trade_value",
    "envelope_value_change",
    "delta_v_series",
    "estimated_cost_changes",
    "marginal_contribution_series",
    "transfer_series",
    "participation_fee",
    "compute_oracle",
    "settle",
    "run_pipeline",
    "deviation_experiment",
    "lmp_benchmark",
]


class MissingExcludedRun(Exception):
    """Settlement requires one exclusion trajectory per participating area."""


# ---------------------------------------------------------------------------
# elementary formulas
# ---------------------------------------------------------------------------


def trade_value(
    flows: np.ndarray,
    alpha_nb: np.ndarray,
    mu: np.ndarray,
    limits: np.ndarray,
) -> float:
    """Net value of one area's intertie trades at quoted terms:
    energy revenue minus its half of the capacity charge."""
    flows = np.asarray(flows, dtype=float)
    return float(
        alpha_nb @ flows - 0.5 * mu @ (np.abs(flows) - limits)
    )


def _sign(x: np.ndarray) -> np.ndarray:
    # sign(0) = +1 by convention
    return np.where(np.asarray(x) >= 0.0, 1.0, -1.0)


def envelope_value_change(
    t_hat: np.ndarray,
    xi: np.ndarray,
    d_alpha: np.ndarray,
    d_mu: np.ndarray,
    d_theta: np.ndarray,
    limits: np.ndarray,
    xbar: np.ndarray,
    envelope: str = "objective",
) -> float:
    """First-order change of one area's optimal value for a signal move.

    The derivatives are those of the area objective at the reported
    optimum: -T_hat against the neighbor price, (|T_hat| - Tbar)/2 against
    the capacity price, and xi/xbar against the neighbor angle.
    ``envelope="published"`` uses |T_hat|/2 for the capacity-price
    derivative (no Tbar term) for comparison purposes.
    """
    usage = np.abs(t_hat) - (limits if envelope == "objective" else 0.0)
    return -float(t_hat @ d_alpha - 0.5 * usage @ d_mu - (xi / xbar) @ d_theta)


def _neighbor_series(outcome: CouplingOutcome, area: str):
    """Neighbor-end published price/angle series aligned with the area's
    own tieline order. Shapes (K+1, nt)."""
    tr = outcome.traces[area]
    K1 = tr.alpha.shape[0]
    nt = len(tr.tieline_ids)
    alpha = np.zeros((K1, nt))
    theta = np.zeros((K1, nt))
    for j, tid in enumerate(tr.tieline_ids):
        for other, otr in outcome.traces.items():
            if other != area and tid in otr.tieline_ids:
                jj = otr.tieline_ids.index(tid)
                alpha[:, j] = otr.alpha[:, jj]
                theta[:, j] = otr.theta[:, jj]
                break
    return alpha, theta


def delta_v_series(
    outcome: CouplingOutcome, area: str, envelope: str = "objective"
) -> np.ndarray:
    """First-order estimates of V_{k+1} - V_k from published signals only.

    Entry k (0 <= k < K) estimates the value change caused by the signal
    move from iteration k-1 to k; entry 0 is zero because the published
    signals are frozen at the pre-coupling state. Uses the reported
    desired flows, the reconstructed coupling dual
    ``xi = a'_{k-1} - (mu_{k-1}/2) sign(T_hat_k) - a_hat_k``,
    and the envelope derivatives of the area objective.
    """
    if envelope not in ("objective", "published"):
        raise ValueError("envelope must be 'objective' or 'published'")
    tr = outcome.traces[area]
    K = tr.alpha.shape[0] - 1
    nt = len(tr.tieline_ids)
    out = np.zeros(K)
    if nt == 0 or K == 0:
        return out
    alpha_nb, theta_nb = _neighbor_series(outcome, area)
    pos = [outcome.tieline_ids.index(t) for t in tr.tieline_ids]
    mu = outcome.mu[:, pos]
    limits = outcome.limits[pos]
    xbar = np.array([outcome.reactances[t] for t in tr.tieline_ids])
    for k in range(1, K):
        t_hat = tr.t_hat[k]
        xi = alpha_nb[k - 1] - 0.5 * mu[k - 1] * _sign(t_hat) - tr.alpha_hat[k]
        out[k] = envelope_value_change(
            t_hat,
            xi,
            alpha_nb[k] - alpha_nb[k - 1],
            mu[k] - mu[k - 1],
            theta_nb[k] - theta_nb[k - 1],
            limits,
            xbar,
            envelope,
        )
    return out


def _extended(arr: np.ndarray, length: int, mode: str) -> np.ndarray:
    """Pad a converged series: values repeat, increments vanish."""
    if len(arr) >= length:
        return arr[:length]
    pad_value = arr[-1] if (mode == "hold" and len(arr)) else 0.0
    return np.concatenate([arr, np.full(length - len(arr), pad_value)])


def estimated_cost_changes(
    outcome: CouplingOutcome, area: str, envelope: str = "objective"
) -> np.ndarray:
    """Per-iteration estimates of the area's internal cost change,
    built from published information only (no cost-function access):
    ``dC_k = dV_k + r_{k+1} - r_k`` for k = 0..K-1."""
    tr = outcome.traces[area]
    K = tr.alpha.shape[0] - 1
    dv = delta_v_series(outcome, area, envelope)
    r = tr.trade_value
    return dv + r[1 : K + 1] - r[0:K]


def marginal_contribution_series(
    full: CouplingOutcome,
    excluded: CouplingOutcome,
    area: str,
    envelope: str = "objective",
) -> np.ndarray:
    """Estimated per-iteration marginal contribution of ``area``: others'
    estimated cost changes with the area coupled minus without it."""
    K = full.traces[area].alpha.shape[0] - 1
    out = np.zeros(K)
    for other in full.areas:
        if other == area:
            continue
        dc = estimated_cost_changes(full, other, envelope)
        dct = estimated_cost_changes(excluded, other, envelope)
        out += _extended(dc, K, "zero") - _extended(dct, K, "zero")
    return out


def transfer_series(
    full: CouplingOutcome,
    excluded: CouplingOutcome,
    area: str,
    envelope: str = "objective",
) -> np.ndarray:
    """Per-iteration incentive transfers (charges positive):
    ``dpi_k = dM_k + r_{k+1} - r_k``, with the k = 0 trade endpoint
    normalized to the zero pre-coupling prices."""
    tr = full.traces[area]
    K = tr.alpha.shape[0] - 1
    dm = marginal_contribution_series(full, excluded, area, envelope)
    r = tr.trade_value.copy()
    r0 = np.concatenate([[0.0], r[1:]])  # settlement normalization at k = 0
    return dm + r0[1 : K + 1] - r0[0:K]


# ---------------------------------------------------------------------------
# oracle bundle
# ---------------------------------------------------------------------------


@dataclass
class OracleBundle:
    """Centralized solves used to validate mechanism-limit quantities."""

    central: CentralizedSolution
    excluded: dict[str, ExcludedSolution]
    standalone_costs: dict[str, float]

    @property
    def total_cost(self) -> float:
        return self.central.total_cost

    def gain(self, area: str) -> float:
        """C_{a,0} + C~_{-a} - C*, the area's headline gain from coupling."""
        return (
            self.standalone_costs[area]
            + self.excluded[area].cost_others
            - self.central.total_cost
        )

    def marginal_contribution(self, area: str) -> float:
        return self.central.cost_excluding(area) - self.excluded[area].cost_others

    def congestion_rent(self, network: Network) -> float:
        rent = 0.0
        for t in network.tielines:
            rent += (
                self.central.lmps[t.to_bus] - self.central.lmps[t.from_bus]
            ) * self.central.flows[t.id]
        return rent


def compute_oracle(network: Network, jobs: int = 1) -> OracleBundle:
    central = solve_centralized(network)
    standalone = {a: stand_alone_clearing(network, a).cost for a in network.areas}
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futs = {
                a: pool.submit(solve_centralized_excluding, network, a)
                for a in network.areas
            }
            excluded = {a: f.result() for a, f in futs.items()}
    else:
        excluded = {
            a: solve_centralized_excluding(network, a) for a in network.areas
        }
    return OracleBundle(central, excluded, standalone)


def participation_fee(
    network: Network, oracle: OracleBundle | None = None
) -> tuple[float, dict[str, float]]:
    """Fee set at the smallest per-area coupling gain, and the gains.

    At this level every area keeps a non-negative net cost reduction and
    the mechanism runs no deficit; any higher fee pushes the smallest-gain
    area to a loss, any lower one erodes the budget.
    """
    oracle = oracle or compute_oracle(network)
    gains = {a: oracle.gain(a) for a in network.areas}
    return min(gains.values()), gains


# ---------------------------------------------------------------------------
# settlement
# ---------------------------------------------------------------------------


@dataclass
class AreaSettlement:
    area: str
    cost_initial: float  # stand-alone cost, true coefficients, $/h
    cost_final: float  # final-dispatch cost, true coefficients, $/h
    trade_final: float  # r at the final iteration, $/h
    transfers: float  # total estimated incentive charge (negative = reward)
    contribution_estimated: float
    contribution_converged: float
    contribution_oracle: float | None
    fee: float
    reduction_estimated: float
    reduction_converged: float
    reduction_oracle: float | None
    delta_diag: float  # |estimated - converged| reduction gap


@dataclass
class Settlement:
    """The incentive ledger for one pipeline execution."""

    areas: tuple[str, ...]
    by_area: dict[str, AreaSettlement]
    fee: float
    fee_gains: dict[str, float]
    fee_source: str  # "oracle" | "mechanism" | "given"
    budget_estimated: float
    budget_converged: float
    congestion_rent: float  # from final mechanism signals
    congestion_rent_oracle: float | None
    surplus_estimated: float
    surplus_converged: float
    surplus_oracle: float | None
    system_saving: float  # C_0 - final total cost
    theorem3_lhs: float
    theorem3_rhs: float
    theorem3_holds: bool

    def reductions(self, kind: str = "converged") -> dict[str, float]:
        return {
            a: getattr(self.by_area[a], f"reduction_{kind}") for a in self.areas
        }


def _mechanism_rent(outcome: CouplingOutcome) -> float:
    rent = 0.0
    K = outcome.iterations
    for tid in outcome.tieline_ids:
        ends = {}
        for a, tr in outcome.traces.items():
            if tid in tr.tieline_ids:
                j = tr.tieline_ids.index(tid)
                ends[outcome._end_signs[(a, tid)]] = (
                    tr.alpha[K, j],
                    tr.t[K, j],
                )
        (a_from, t_from), (a_to, _) = ends[1.0], ends[-1.0]
        rent += (a_to - a_from) * t_from
    return rent


def settle(
    full: CouplingOutcome,
    excluded: dict[str, CouplingOutcome],
    fee: float | None = None,
    oracle: OracleBundle | None = None,
    network: Network | None = None,
    envelope: str = "objective",
) -> Settlement:
    """Assemble the incentive ledger from a full run and one exclusion run
    per area. ``fee=None`` derives the fee from the oracle when given,
    otherwise from the mechanism's converged values."""
    areas = full.areas
    missing = [a for a in areas if a not in excluded]
    if missing:
        raise MissingExcludedRun(f"no exclusion trajectory for {missing}")

    K = full.iterations
    cost0 = {a: full.traces[a].cost_true[0] for a in areas}
    cost_final = {a: full.traces[a].cost_true[K] for a in areas}
    total_final = sum(cost_final.values())
    c0_total = sum(cost0.values())

    # converged exclusion costs per (excluded, other)
    def excl_cost_final(excl_area: str, other: str) -> float:
        out = excluded[excl_area]
        tr = out.traces[other]
        return tr.cost_true[out.iterations]

    gains_mech = {
        a: cost0[a]
        + sum(excl_cost_final(a, o) for o in areas if o != a)
        - total_final
        for a in areas
    }
    if fee is not None:
        fee_value, fee_gains, fee_source = fee, gains_mech, "given"
    elif oracle is not None:
        fee_gains = {a: oracle.gain(a) for a in areas}
        fee_value, fee_source = min(fee_gains.values()), "oracle"
    else:
        fee_value, fee_gains, fee_source = min(gains_mech.values()), gains_mech, "mechanism"

    by_area: dict[str, AreaSettlement] = {}
    for a in areas:
        tr = full.traces[a]
        r_final = tr.trade_value[K]
        transfers = float(np.sum(transfer_series(full, excluded[a], a, envelope)))
        m_est = float(
            np.sum(marginal_contribution_series(full, excluded[a], a, envelope))
        )
        m_conv = sum(
            cost_final[o] - excl_cost_final(a, o) for o in areas if o != a
        )
        m_oracle = oracle.marginal_contribution(a) if oracle else None
        v_final = cost_final[a] - r_final
        red_est = -(v_final - cost0[a] + transfers + fee_value)
        red_conv = cost0[a] - cost_final[a] - m_conv - fee_value
        red_oracle = (
            oracle.gain(a) - fee_value if oracle else None
        )
        by_area[a] = AreaSettlement(
            area=a,
            cost_initial=cost0[a],
            cost_final=cost_final[a],
            trade_final=r_final,
            transfers=transfers,
            contribution_estimated=m_est,
            contribution_converged=m_conv,
            contribution_oracle=m_oracle,
            fee=fee_value,
            reduction_estimated=red_est,
            reduction_converged=red_conv,
            reduction_oracle=red_oracle,
            delta_diag=abs(red_est - red_conv),
        )

    n = len(areas)
    budget_est = n * fee_value + sum(s.transfers for s in by_area.values())
    budget_conv = n * fee_value + sum(
        s.contribution_converged + s.trade_final for s in by_area.values()
    )
    rent = _mechanism_rent(full)
    rent_oracle = oracle.congestion_rent(network) if oracle and network else None
    surplus_oracle = None
    if oracle:
        surplus_oracle = n * fee_value + sum(
            oracle.marginal_contribution(a) for a in areas
        )

    min_gain = min(fee_gains.values())
    t3_lhs = c0_total - total_final
    t3_rhs = sum(g - min_gain for g in fee_gains.values())

    return Settlement(
        areas=areas,
        by_area=by_area,
        fee=fee_value,
        fee_gains=fee_gains,
        fee_source=fee_source,
        budget_estimated=budget_est,
        budget_converged=budget_conv,
        congestion_rent=rent,
        congestion_rent_oracle=rent_oracle,
        surplus_estimated=budget_est - rent,
        surplus_converged=budget_conv - rent,
        surplus_oracle=surplus_oracle,
        system_saving=c0_total - total_final,
        theorem3_lhs=t3_lhs,
        theorem3_rhs=t3_rhs,
        theorem3_holds=bool(t3_lhs >= t3_rhs - 1e-6 * max(1.0, abs(t3_rhs))),
    )


# ---------------------------------------------------------------------------
# pipelines and experiments
# ---------------------------------------------------------------------------


@dataclass
class PipelineResult:
    network: Network
    config: MechanismConfig
    reporting: dict[str, float]
    full: CouplingOutcome
    excluded: dict[str, CouplingOutcome]
    ledger: Settlement
    oracle: OracleBundle | None


def run_pipeline(
    network: Network,
    config: MechanismConfig | None = None,
    reporting: dict[str, float] | None = None,
    fee: float | None = None,
    with_oracle: bool = True,
    jobs: int = 1,
    envelope: str = "objective",
) -> PipelineResult:
    """Full mechanism + one exclusion run per area + settlement.

    ``reporting`` scales the named areas' reported costs; the oracle (when
    enabled) always reflects the reported coefficients' truthful baseline,
    i.e. it is computed on the unscaled network.
    """
    config = config or MechanismConfig()
    reporting = dict(reporting or {})
    runs: dict[str, CouplingOutcome] = {}

    def _one(excl: str | None) -> CouplingOutcome:
        if excl is None:
            return run(network, config, reporting)
        return run_excluded(network, config, excl, reporting)

    labels: list[str | None] = [None, *network.areas]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futs = {lbl: pool.submit(_one, lbl) for lbl in labels}
            results = {lbl: f.result() for lbl, f in futs.items()}
    else:
        results = {lbl: _one(lbl) for lbl in labels}
    full = results[None]
    runs = {a: results[a] for a in network.areas}

    oracle = compute_oracle(network, jobs=jobs) if with_oracle else None
    ledger = settle(
        full, runs, fee=fee, oracle=oracle, network=network, envelope=envelope
    )
    return PipelineResult(
        network=network,
        config=config,
        reporting=reporting,
        full=full,
        excluded=runs,
        ledger=ledger,
        oracle=oracle,
    )


@dataclass
class DeviationReport:
    deviator: str
    factor: float
    fee: float
    equilibrium: dict[str, float]  # total cost reduction per area
    deviated: dict[str, float]
    equilibrium_estimated: dict[str, float]
    deviated_estimated: dict[str, float]

    def deviator_gain(self) -> float:
        return self.deviated[self.deviator] - self.equilibrium[self.deviator]


def deviation_experiment(
    network: Network,
    config: MechanismConfig | None = None,
    area: str = "",
    factor: float = 1.1,
    equilibrium: PipelineResult | None = None,
    jobs: int = 1,
) -> DeviationReport:
    """Compare settlement under equilibrium reporting against one area
    scaling its reported costs by ``factor``.

    The deviator's internal cost is always evaluated with its true cost
    functions applied to the dispatch its reports induce; the fee is the
    equilibrium fee in both columns.
    """
    if area not in network.areas:
        raise KeyError(f"unknown area {area!r}")
    eq = equilibrium or run_pipeline(network, config, jobs=jobs)
    dev = run_pipeline(
        network,
        config,
        reporting={area: factor},
        fee=eq.ledger.fee,
        with_oracle=False,
        jobs=jobs,
    )
    return DeviationReport(
        deviator=area,
        factor=factor,
        fee=eq.ledger.fee,
        equilibrium=eq.ledger.reductions("converged"),
        deviated=dev.ledger.reductions("converged"),
        equilibrium_estimated=eq.ledger.reductions("estimated"),
        deviated_estimated=dev.ledger.reductions("estimated"),
    )


@dataclass
class LmpReport:
    deviator: str | None
    factor: float
    equilibrium: dict[str, float]
    deviated: dict[str, float] | None


def lmp_benchmark(
    network: Network,
    config: MechanismConfig | None = None,
    deviate: str | None = None,
    factor: float = 1.1,
    equilibrium_run: CouplingOutcome | None = None,
) -> LmpReport:
    """Benchmark settlement where areas are merely paid or charged for
    exported/imported energy at boundary prices: the cost reduction is the
    value change alone, with no transfers and no fee."""

    def reductions(outcome: CouplingOutcome) -> dict[str, float]:
        K = outcome.iterations
        out = {}
        for a in outcome.areas:
            tr = outcome.traces[a]
            out[a] = tr.cost_true[0] - tr.cost_true[K] + tr.trade_value[K]
        return out

    base = equilibrium_run or run(network, config)
    deviated = None
    if deviate is not None:
        if deviate not in network.areas:
            raise KeyError(f"unknown area {deviate!r}")
        deviated = reductions(run(network, config, {deviate: factor}))
    return LmpReport(
        deviator=deviate,
        factor=factor,
        equilibrium=reductions(base),
        deviated=deviated,
    )
