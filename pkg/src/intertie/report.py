"""Plain-text reports and CSV artifacts for the batch commands.

Numbers are formatted with a fixed precision so a repeated run writes
byte-identical files.
"""

from __future__ import annotations

import csv

from .coupling import CouplingOutcome
from .incentives import DeviationReport, LmpReport, Settlement
from .network import Network
from .opf import CentralizedSolution

__all__ = [
    "fmt",
    "text_table",
    "centralized_report",
    "write_centralized_csvs",
    "coupling_report",
    "settlement_report",
    "write_settlement_csv",
    "deviation_report_text",
    "lmp_report_text",
]


def fmt(x, nd=2) -> str:
    if isinstance(x, float):
        return f"{x:,.{nd}f}"
    return str(x)


def text_table(headers: list[str], rows: list[list]) -> str:
    cells = [[str(h) for h in headers]] + [[fmt(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    def line(r):
        return "  ".join(s.rjust(w) for s, w in zip(r, widths))
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(cells[0]), sep, *(line(r) for r in cells[1:])])


# -- centralized --------------------------------------------------------------


def centralized_report(net: Network, sol: CentralizedSolution) -> str:
    parts = [f"Centralized clearing: {net.name or 'unnamed case'}", ""]
    parts.append(
        text_table(
            ["area", "cost $/h"],
            [[a, sol.area_costs[a]] for a in net.areas]
            + [["total", sol.total_cost]],
        )
    )
    parts.append("")
    rows = []
    for t in net.tielines:
        rows.append(
            [
                t.id,
                sol.flows[t.id],
                sol.capacity_prices[t.id],
                sol.lmps[t.from_bus],
                sol.lmps[t.to_bus],
            ]
        )
    if rows:
        parts.append("Tieline schedule (flow in the registered direction):")
        parts.append(
            text_table(
                ["tieline", "flow MW", "capacity price $/MWh",
                 "sending-end LMP", "receiving-end LMP"],
                rows,
            )
        )
    return "\n".join(parts) + "\n"


def write_centralized_csvs(net: Network, sol: CentralizedSolution, outdir) -> list:
    paths = []
    p = outdir / "centralized_buses.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus", "area", "lmp", "angle"])
        for b in net.buses:
            w.writerow([b.id, b.area, _g(sol.lmps[b.id]), _g(sol.angles[b.id])])
    paths.append(p)
    p = outdir / "centralized_dispatch.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["generator", "bus", "dispatch_mw"])
        for g in net.generators:
            w.writerow([g.id, g.bus, _g(sol.dispatch[g.id])])
    paths.append(p)
    p = outdir / "centralized_tielines.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["tieline", "flow_mw", "capacity_price", "lmp_from", "lmp_to"]
        )
        for t in net.tielines:
            w.writerow(
                [
                    t.id,
                    _g(sol.flows[t.id]),
                    _g(sol.capacity_prices[t.id]),
                    _g(sol.lmps[t.from_bus]),
                    _g(sol.lmps[t.to_bus]),
                ]
            )
    paths.append(p)
    return paths


# -- coupling -----------------------------------------------------------------


def coupling_report(outcome: CouplingOutcome) -> str:
    K = outcome.iterations
    parts = [
        "Coupling mechanism outcome"
        + (f" (area {outcome.excluded} excluded)" if outcome.excluded else ""),
        f"rounds: {K}   converged: {'yes' if outcome.converged else 'NO'}",
        "",
    ]
    rows = []
    for i, tid in enumerate(outcome.tieline_ids):
        rows.append(
            [
                tid,
                outcome.final_flow(tid),
                outcome.mu[K, i],
                outcome.mismatch[K, i],
                outcome.cs_residual[K, i],
            ]
        )
    if rows:
        parts.append(
            text_table(
                ["tieline", "flow MW", "mu $/MWh", "mismatch MW", "cs residual"],
                rows,
            )
        )
        parts.append("")
    parts.append(
        text_table(
            ["area", "stand-alone $/h", "final $/h", "final trade value $/h"],
            [
                [
                    a,
                    outcome.traces[a].cost_true[0],
                    outcome.traces[a].cost_true[K],
                    outcome.traces[a].trade_value[K],
                ]
                for a in outcome.areas
            ],
        )
    )
    fb = {a: n for a, n in outcome.fallbacks.items() if n}
    if fb:
        parts.append("")
        parts.append(f"declined-trade rounds: {fb}")
    return "\n".join(parts) + "\n"


# -- settlement ---------------------------------------------------------------


def settlement_report(led: Settlement) -> str:
    parts = [
        "Incentive settlement",
        f"participation fee: {fmt(led.fee)} $  (source: {led.fee_source})",
        "",
        text_table(
            [
                "area",
                "stand-alone $/h",
                "final $/h",
                "contribution est $",
                "contribution conv $",
                "transfers $",
                "reduction est $",
                "reduction conv $",
            ],
            [
                [
                    a,
                    s.cost_initial,
                    s.cost_final,
                    s.contribution_estimated,
                    s.contribution_converged,
                    s.transfers,
                    s.reduction_estimated,
                    s.reduction_converged,
                ]
                for a, s in ((a, led.by_area[a]) for a in led.areas)
            ],
        ),
        "",
        text_table(
            ["quantity", "value"],
            [
                ["system saving $/h", led.system_saving],
                ["budget (estimated) $", led.budget_estimated],
                ["budget (converged) $", led.budget_converged],
                ["congestion rent $", led.congestion_rent],
                ["surplus (estimated) $", led.surplus_estimated],
                ["surplus (converged) $", led.surplus_converged],
                ["efficiency condition holds", str(led.theorem3_holds)],
            ],
        ),
    ]
    if led.congestion_rent_oracle is not None:
        parts.append("")
        parts.append(
            text_table(
                ["oracle quantity", "value"],
                [
                    ["congestion rent $", led.congestion_rent_oracle],
                    ["surplus $", led.surplus_oracle],
                ]
                + [
                    [f"contribution {a} $", led.by_area[a].contribution_oracle]
                    for a in led.areas
                ]
                + [
                    [f"reduction {a} $", led.by_area[a].reduction_oracle]
                    for a in led.areas
                ],
            )
        )
    return "\n".join(parts) + "\n"


def write_settlement_csv(led: Settlement, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "area", "fee", "cost_initial", "cost_final", "trade_final",
                "transfers", "contribution_estimated", "contribution_converged",
                "contribution_oracle", "reduction_estimated",
                "reduction_converged", "reduction_oracle", "delta_diag",
            ]
        )
        for a in led.areas:
            s = led.by_area[a]
            w.writerow(
                [
                    a, _g(led.fee), _g(s.cost_initial), _g(s.cost_final),
                    _g(s.trade_final), _g(s.transfers),
                    _g(s.contribution_estimated), _g(s.contribution_converged),
                    _g(s.contribution_oracle), _g(s.reduction_estimated),
                    _g(s.reduction_converged), _g(s.reduction_oracle),
                    _g(s.delta_diag),
                ]
            )
        w.writerow([])
        for key, val in [
            ("system_saving", led.system_saving),
            ("budget_estimated", led.budget_estimated),
            ("budget_converged", led.budget_converged),
            ("congestion_rent", led.congestion_rent),
            ("congestion_rent_oracle", led.congestion_rent_oracle),
            ("surplus_estimated", led.surplus_estimated),
            ("surplus_converged", led.surplus_converged),
            ("surplus_oracle", led.surplus_oracle),
            ("theorem3_holds", led.theorem3_holds),
        ]:
            w.writerow([key, _g(val)])


def deviation_report_text(rep: DeviationReport) -> str:
    areas = sorted(rep.equilibrium)
    return (
        f"Deviation experiment: area {rep.deviator} scales reported costs by "
        f"{rep.factor}\nparticipation fee: {fmt(rep.fee)} $\n\n"
        + text_table(
            ["area", "reduction (equilibrium) $", "reduction (deviation) $"],
            [[a, rep.equilibrium[a], rep.deviated[a]] for a in areas],
        )
        + "\n\n"
        + f"deviator gain: {fmt(rep.deviator_gain())} $ "
        + "(non-positive means the deviation did not pay)\n"
    )


def lmp_report_text(rep: LmpReport) -> str:
    areas = sorted(rep.equilibrium)
    headers = ["area", "reduction (equilibrium) $"]
    rows = [[a, rep.equilibrium[a]] for a in areas]
    if rep.deviated is not None:
        headers.append(f"reduction ({rep.deviator} deviates x{rep.factor}) $")
        for row, a in zip(rows, areas):
            row.append(rep.deviated[a])
    return (
        "Boundary-price remuneration benchmark (no transfers, no fee)\n\n"
        + text_table(headers, rows)
        + "\n"
    )


def _g(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, float):
        return format(x, ".10g")
    return str(x)
