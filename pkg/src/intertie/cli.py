"""Batch command-line interface.

Commands clear a case, run the coupling mechanism, settle incentives, or
compare reporting deviations, writing plain-text reports, CSV artifacts
and figures into the output directory together with a run manifest that
reproduces the run (``intertie rerun <manifest>``).

Exit codes: 0 success, 1 mechanism did not converge (outputs are still
written), 2 case validation failure, 3 I/O or parse failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, caseio, plots, report
from .caseio import CaseError, CaseIoError, CaseParseError, CaseValidationError
from .coupling import (
    MechanismConfig,
    run,
    run_excluded,
    write_boundary_trace,
    write_tieline_trace,
)
from .incentives import deviation_experiment, lmp_benchmark, run_pipeline
from .network import validate
from .opf import solve_centralized
from .qp import QpError

__all__ = ["main"]


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    case: str
    out: str
    seed: int | None
    version: str
    timestamp: str

    def write(self, outdir: Path) -> None:
        with open(outdir / "manifest.json", "w") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")


def _mechanism_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beta", type=float, help="capacity price step in (0,1)")
    p.add_argument("--rho", choices=("log", "harmonic"), help="inertia schedule")
    p.add_argument("--mu0", type=float, help="initial capacity price $/MWh")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--tol-flow", type=float, dest="tol_flow")
    p.add_argument("--tol-price", type=float, dest="tol_price")
    p.add_argument(
        "--stop", choices=("fixed", "tolerance"), help="stopping rule"
    )


def _common_args(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--case", required=True, help="case file, 'rts96', or 'synth'")
    if out_required:
        p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="seed for synthetic cases")
    p.add_argument("--jobs", type=int, default=1, help="max parallel runs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="intertie",
        description="market coupling for independently cleared electricity areas",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a case against every invariant")
    _common_args(p, out_required=False)

    p = sub.add_parser("centralized", help="joint clearing of all areas (oracle)")
    _common_args(p)

    p = sub.add_parser("couple", help="run the iterative coupling mechanism")
    _common_args(p)
    _mechanism_args(p)
    p.add_argument("--exclude", metavar="AREA", help="leave one area out")
    p.add_argument(
        "--deviate", metavar="AREA:FACTOR", help="scale one area's reported costs"
    )

    p = sub.add_parser(
        "incentives", help="full pipeline: coupling + exclusions + settlement"
    )
    _common_args(p)
    _mechanism_args(p)
    p.add_argument("--deviate", metavar="AREA:FACTOR")
    p.add_argument(
        "--benchmark-lmp",
        action="store_true",
        help="also settle under boundary-price remuneration",
    )
    p.add_argument(
        "--no-oracle",
        action="store_true",
        help="skip centralized reference solves",
    )

    p = sub.add_parser("deviate", help="equilibrium vs scaled-report settlement")
    _common_args(p)
    _mechanism_args(p)
    p.add_argument("--deviate", metavar="AREA:FACTOR", required=True)
    p.add_argument("--benchmark-lmp", action="store_true")

    p = sub.add_parser("rerun", help="re-execute a recorded run manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="override the output directory")
    return ap


def _load_case(args, check: bool = True):
    case = args.case
    if isinstance(case, str) and case.lower().startswith("synth"):
        parts = case.split(":")
        areas, buses, ties = 3, 5, 3
        if len(parts) > 1 and parts[1]:
            areas, buses, ties = (int(v) for v in parts[1].split(","))
        net = caseio.synth(args.seed, areas, buses, ties)
        return net, None, {}
    return caseio.load(case, check=check)


def _config_from(args, case_config) -> MechanismConfig:
    cfg = case_config or MechanismConfig()
    updates = {
        "beta": args.beta,
        "rho": args.rho,
        "mu0": args.mu0,
        "max_iterations": args.max_iters,
        "tol_flow": args.tol_flow,
        "tol_price": args.tol_price,
        "stop": args.stop,
    }
    from dataclasses import replace

    return replace(cfg, **{k: v for k, v in updates.items() if v is not None})


def _parse_deviation(spec: str | None) -> tuple[str, float] | None:
    if not spec:
        return None
    try:
        area, factor = spec.split(":")
        return area, float(factor)
    except ValueError as exc:
        raise CaseParseError(f"bad --deviate value {spec!r}; want AREA:FACTOR") from exc


def _prepare_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, argv) -> RunManifest:
    return RunManifest(
        command=args.command,
        argv=list(argv),
        case=str(args.case),
        out=str(getattr(args, "out", "")),
        seed=getattr(args, "seed", None),
        version=__version__,
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


# -- commands ------------------------------------------------------------------


def cmd_validate(args, argv) -> int:
    net, _, _ = _load_case(args, check=False)
    violations = validate(net)
    if violations:
        for v in violations:
            print(f"violation: {v}")
        return 2
    print(
        f"ok: {len(net.areas)} areas, {len(net.buses)} buses, "
        f"{len(net.generators)} generators, {len(net.internal_lines)} lines, "
        f"{len(net.tielines)} tielines"
    )
    return 0


def cmd_centralized(args, argv) -> int:
    net, _, _ = _load_case(args)
    out = _prepare_out(args)
    sol = solve_centralized(net)
    (out / "report.txt").write_text(report.centralized_report(net, sol))
    report.write_centralized_csvs(net, sol, out)
    plots.plot_lmps(net, sol, out / "lmps.png")
    _manifest(args, argv).write(out)
    print((out / "report.txt").read_text())
    return 0


def cmd_couple(args, argv) -> int:
    net, case_cfg, case_reporting = _load_case(args)
    out = _prepare_out(args)
    config = _config_from(args, case_cfg)
    reporting = dict(case_reporting)
    dev = _parse_deviation(getattr(args, "deviate", None))
    if dev:
        reporting[dev[0]] = dev[1]
    if getattr(args, "exclude", None):
        outcome = run_excluded(net, config, args.exclude, reporting)
    else:
        outcome = run(net, config, reporting)
    (out / "report.txt").write_text(report.coupling_report(outcome))
    write_tieline_trace(outcome, out / "trace_tielines.csv")
    write_boundary_trace(outcome, out / "trace_boundary.csv")
    plots.plot_tieline_flows(outcome, out / "tieline_flows.png")
    plots.plot_capacity_prices(outcome, out / "capacity_prices.png")
    plots.plot_boundary_lmps(outcome, out / "boundary_lmps.png")
    _manifest(args, argv).write(out)
    print((out / "report.txt").read_text())
    return 0 if outcome.converged else 1


def cmd_incentives(args, argv) -> int:
    net, case_cfg, case_reporting = _load_case(args)
    out = _prepare_out(args)
    config = _config_from(args, case_cfg)
    reporting = dict(case_reporting)
    dev = _parse_deviation(getattr(args, "deviate", None))
    if dev:
        reporting[dev[0]] = dev[1]
    pipe = run_pipeline(
        net,
        config,
        reporting,
        with_oracle=not getattr(args, "no_oracle", False),
        jobs=args.jobs,
    )
    (out / "report.txt").write_text(report.settlement_report(pipe.ledger))
    report.write_settlement_csv(pipe.ledger, out / "ledger.csv")
    write_tieline_trace(pipe.full, out / "trace_tielines.csv")
    write_boundary_trace(pipe.full, out / "trace_boundary.csv")
    plots.plot_tieline_flows(pipe.full, out / "tieline_flows.png")
    plots.plot_capacity_prices(pipe.full, out / "capacity_prices.png")
    plots.plot_reductions(pipe.ledger, out / "reductions.png")
    if getattr(args, "benchmark_lmp", False):
        rep = lmp_benchmark(net, config, equilibrium_run=pipe.full)
        (out / "lmp_benchmark.txt").write_text(report.lmp_report_text(rep))
    _manifest(args, argv).write(out)
    print((out / "report.txt").read_text())
    ok = pipe.full.converged and all(o.converged for o in pipe.excluded.values())
    return 0 if ok else 1


def cmd_deviate(args, argv) -> int:
    net, case_cfg, _ = _load_case(args)
    out = _prepare_out(args)
    config = _config_from(args, case_cfg)
    area, factor = _parse_deviation(args.deviate)
    rep = deviation_experiment(net, config, area, factor, jobs=args.jobs)
    text = report.deviation_report_text(rep)
    if getattr(args, "benchmark_lmp", False):
        lrep = lmp_benchmark(net, config, deviate=area, factor=factor)
        text += "\n" + report.lmp_report_text(lrep)
    (out / "report.txt").write_text(text)
    with open(out / "deviation.csv", "w", newline="") as fh:
        import csv

        w = csv.writer(fh)
        w.writerow(["area", "reduction_equilibrium", "reduction_deviation"])
        for a in sorted(rep.equilibrium):
            w.writerow(
                [a, format(rep.equilibrium[a], ".10g"), format(rep.deviated[a], ".10g")]
            )
    _manifest(args, argv).write(out)
    print(text)
    return 0


def cmd_rerun(args, argv) -> int:
    try:
        with open(args.manifest) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read manifest: {exc}", file=sys.stderr)
        return 3
    stored = list(doc.get("argv", []))
    if args.out:
        if "--out" in stored:
            i = stored.index("--out")
            stored[i + 1] = args.out
        else:
            stored += ["--out", args.out]
    return main(stored)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "validate": cmd_validate,
        "centralized": cmd_centralized,
        "couple": cmd_couple,
        "incentives": cmd_incentives,
        "deviate": cmd_deviate,
        "rerun": cmd_rerun,
    }
    try:
        return handlers[args.command](args, argv)
    except CaseValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (CaseParseError, CaseIoError) as exc:
        print(f"case error: {exc}", file=sys.stderr)
        return 3
    except (CaseError, QpError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
