import json
from pathlib import Path

import pytest

from intertie.caseio import save
from intertie.cli import main
from tests.conftest import two_area_network


@pytest.fixture
def case_path(tmp_path):
    p = tmp_path / "toy.yaml"
    save(p, two_area_network())
    return p


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_validate_ok(case_path, capsys):
    assert run_cli("validate", "--case", case_path) == 0
    assert "ok:" in capsys.readouterr().out


def test_validate_reports_violations(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(
        "areas: [A]\nbuses:\n  - {id: A1, area: A, load: 10.0}\n"
        "generators:\n  - {id: g, bus: A1, c2: 0.1, c1: 1.0, p_min: 0.0, p_max: 5.0}\n"
    )
    assert run_cli("validate", "--case", bad) == 2
    assert "infeasible" in capsys.readouterr().out


def test_missing_case_exit_code(tmp_path):
    assert run_cli("validate", "--case", tmp_path / "nope.yaml") == 3


def test_centralized_artifacts(case_path, tmp_path):
    out = tmp_path / "central"
    assert run_cli("centralized", "--case", case_path, "--out", out) == 0
    for name in (
        "report.txt",
        "manifest.json",
        "centralized_buses.csv",
        "centralized_dispatch.csv",
        "centralized_tielines.csv",
        "lmps.png",
    ):
        assert (out / name).exists(), name
    assert "Tieline schedule" in (out / "report.txt").read_text()


def test_couple_artifacts_and_exit(case_path, tmp_path):
    out = tmp_path / "couple"
    code = run_cli(
        "couple", "--case", case_path, "--out", out,
        "--beta", "0.1", "--rho", "log", "--mu0", "30", "--max-iters", "300",
    )
    assert code == 0
    for name in (
        "report.txt", "trace_tielines.csv", "trace_boundary.csv",
        "tieline_flows.png", "capacity_prices.png", "boundary_lmps.png",
        "manifest.json",
    ):
        assert (out / name).exists(), name


def test_couple_nonconvergence_exit_code(case_path, tmp_path):
    out = tmp_path / "nc"
    code = run_cli(
        "couple", "--case", case_path, "--out", out,
        "--beta", "0.1", "--rho", "log", "--mu0", "500", "--max-iters", "3",
    )
    assert code == 1
    assert "NO" in (out / "report.txt").read_text()


def test_couple_exclude(case_path, tmp_path):
    out = tmp_path / "excl"
    code = run_cli(
        "couple", "--case", case_path, "--out", out,
        "--exclude", "A", "--max-iters", "20",
    )
    assert code == 0
    assert "excluded" in (out / "report.txt").read_text()


def test_incentives_artifacts(case_path, tmp_path):
    out = tmp_path / "inc"
    code = run_cli(
        "incentives", "--case", case_path, "--out", out,
        "--beta", "0.1", "--rho", "log", "--mu0", "120", "--max-iters", "400",
        "--benchmark-lmp",
    )
    assert code == 0
    for name in (
        "report.txt", "ledger.csv", "trace_tielines.csv", "reductions.png",
        "lmp_benchmark.txt", "manifest.json",
    ):
        assert (out / name).exists(), name
    text = (out / "report.txt").read_text()
    assert "participation fee" in text
    assert "congestion rent" in text


def test_deviate_command(case_path, tmp_path):
    out = tmp_path / "dev"
    code = run_cli(
        "deviate", "--case", case_path, "--out", out,
        "--deviate", "A:1.1", "--max-iters", "150", "--mu0", "120",
    )
    assert code == 0
    assert (out / "deviation.csv").exists()
    assert "deviator gain" in (out / "report.txt").read_text()


def test_bad_deviate_spec(case_path, tmp_path):
    assert run_cli(
        "deviate", "--case", case_path, "--out", tmp_path / "x",
        "--deviate", "A=1.1",
    ) == 3


def test_synth_case_alias(tmp_path):
    out = tmp_path / "synth"
    code = run_cli(
        "centralized", "--case", "synth:2,3,1", "--seed", "7", "--out", out
    )
    assert code == 0


def test_rerun_reproduces_byte_identical(case_path, tmp_path):
    out1 = tmp_path / "run1"
    assert run_cli(
        "couple", "--case", case_path, "--out", out1,
        "--mu0", "30", "--max-iters", "60",
    ) == 0
    out2 = tmp_path / "run2"
    assert run_cli("rerun", out1 / "manifest.json", "--out", out2) == 0
    for name in (
        "report.txt", "trace_tielines.csv", "trace_boundary.csv",
        "tieline_flows.png", "capacity_prices.png", "boundary_lmps.png",
    ):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m1["command"] == m2["command"] == "couple"
