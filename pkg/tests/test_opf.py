import numpy as np
import pytest

from intertie.caseio import synth
from intertie.network import Bus, Generator, Network, QuadraticCost, Tieline
from intertie.opf import (
    AreaInput,
    AreaSolver,
    area_feasibility,
    critical_price_bound,
    solve_area,
    solve_centralized,
    solve_centralized_excluding,
    stand_alone_clearing,
)


def area_input_from_central(net, sol, area):
    alpha, theta, mu = {}, {}, {}
    for e in net.tieline_ends(area):
        tid = e.tieline.id
        alpha[tid] = sol.lmps[e.neighbor_bus]
        theta[tid] = sol.angles[e.neighbor_bus]
        mu[tid] = sol.capacity_prices[tid]
    return AreaInput(area=area, alpha_nb=alpha, theta_nb=theta, mu=mu)


def test_single_area_marginal_price():
    # one bus, one generator: dispatch equals load, price equals marginal cost
    net = Network(
        areas=("A",),
        buses=(Bus("A1", "A", 80.0),),
        generators=(Generator("g", "A1", QuadraticCost(0.05, 12.0), 0.0, 200.0),),
        internal_lines=(),
        tielines=(),
    )
    sol = solve_centralized(net)
    assert sol.dispatch["g"] == pytest.approx(80.0, abs=1e-7)
    assert sol.lmps["A1"] == pytest.approx(2 * 0.05 * 80  + 12.0, abs=1e-7)
    assert sol.total_cost == pytest.approx(0.05 * 80**2 + 12 * 80, rel=1e-9)


def test_symmetric_areas_no_trade():
    gens = lambda a: Generator(f"g{a}", f"{a}1", QuadraticCost(0.05, 12.0), 0.0, 200.0)
    net = Network(
        areas=("A", "B"),
        buses=(Bus("A1", "A", 80.0), Bus("B1", "B", 80.0)),
        generators=(gens("A"), gens("B")),
        internal_lines=(),
        tielines=(Tieline("T1", "A", "A1", "B", "B1", 0.1, 100.0),),
    )
    sol = solve_centralized(net)
    assert sol.flows["T1"] == pytest.approx(0.0, abs=1e-6)
    assert sol.lmps["A1"] == pytest.approx(sol.lmps["B1"], abs=1e-7)


def test_power_balance_residuals(two_area):
    sol = solve_centralized(two_area)
    # single bus per area: generation - load +- flow must balance
    t = sol.flows["T1"]
    assert sol.dispatch["gA"] - 100.0 - t == pytest.approx(0.0, abs=1e-6)
    assert sol.dispatch["gB"] - 100.0 + t == pytest.approx(0.0, abs=1e-6)


def test_tieline_kkt_identity(two_area):
    # stationarity on the tieline flow: a_i - a_j + eta - kappa + xi = 0
    sol = solve_centralized(two_area)
    resid = (
        sol.lmps["A1"]
        - sol.lmps["B1"]
        + sol.tie_upper_dual["T1"]
        - sol.tie_lower_dual["T1"]
        + sol.xi["T1"]
    )
    assert resid == pytest.approx(0.0, abs=1e-7)


def test_lemma1_two_area(two_area):
    sol = solve_centralized(two_area)
    for area in two_area.areas:
        res = solve_area(two_area, area_input_from_central(two_area, sol, area))
        end = two_area.tieline_ends(area)[0]
        assert res.flows[0] == pytest.approx(end.sign * sol.flows["T1"], abs=1e-5)
        assert res.alpha_b[0] == pytest.approx(sol.lmps[end.own_bus], abs=1e-5)


def test_lemma1_equivalence_randomized():
    # feeding centralized optimal signals into each area's problem must
    # reproduce the centralized per-area solution
    bad = 0
    for seed in range(50):
        net = synth(seed, areas=2 + seed % 2, buses_per_area=3 + seed % 4, tielines=1 + seed % 3)
        sol = solve_centralized(net)
        for area in net.areas:
            res = solve_area(net, area_input_from_central(net, sol, area))
            for j, e in enumerate(net.tieline_ends(area)):
                want = e.sign * sol.flows[e.tieline.id]
                scale = max(1.0, abs(want))
                if abs(res.flows[j] - want) > 1e-5 * scale:
                    bad += 1
            for gid, p in zip(res.gen_ids, res.dispatch):
                scale = max(1.0, abs(sol.dispatch[gid]))
                if abs(p - sol.dispatch[gid]) > 1e-5 * scale:
                    bad += 1
    assert bad == 0


def test_area_value_identity_on_every_solve():
    rng = np.random.default_rng(5)
    for seed in range(10):
        net = synth(seed, areas=2, buses_per_area=4, tielines=2)
        for area in net.areas:
            ends = net.tieline_ends(area)
            inp = AreaInput(
                area=area,
                alpha_nb={e.tieline.id: float(rng.uniform(0, 40)) for e in ends},
                theta_nb={e.tieline.id: float(rng.uniform(-0.3, 0.3)) for e in ends},
                mu={e.tieline.id: float(rng.uniform(0, 20)) for e in ends},
            )
            res = solve_area(net, inp)
            assert res.value == pytest.approx(res.cost - res.trade_value, abs=1e-8)


def test_area_with_no_tielines_equals_standalone():
    net = synth(3, areas=1, buses_per_area=5, tielines=0)
    res = solve_area(net, AreaInput("A", {}, {}, {}))
    sa = stand_alone_clearing(net, "A")
    assert res.cost == pytest.approx(sa.cost, rel=1e-9)
    assert res.trade_value == 0.0


def test_critical_price_kills_trade(two_area):
    bound = critical_price_bound(two_area, alpha_scale=40.0)
    for area in two_area.areas:
        other = "B" if area == "A" else "A"
        sa = stand_alone_clearing(two_area, other)
        nb_bus = f"{other}1"
        inp = AreaInput(
            area=area,
            alpha_nb={"T1": sa.lmps[nb_bus]},
            theta_nb={"T1": 0.0},
            mu={"T1": bound},
        )
        res = solve_area(two_area, inp)
        assert abs(res.flows[0]) < 1e-6


def test_scaled_reporting_shifts_boundary_price(two_area):
    base = solve_area(
        two_area, AreaInput("A", {"T1": 0.0}, {"T1": 0.0}, {"T1": 1000.0})
    )
    up = solve_area(
        two_area,
        AreaInput("A", {"T1": 0.0}, {"T1": 0.0}, {"T1": 1000.0}, cost_factor=1.1),
    )
    # no trade at this price, so the reported price is the scaled marginal cost
    assert up.alpha_b[0] == pytest.approx(1.1 * base.alpha_b[0], rel=1e-6)
    assert up.cost == pytest.approx(1.1 * base.cost, rel=1e-9)
    assert up.cost_true == pytest.approx(base.cost_true, rel=1e-9)


def test_stand_alone_dispatch_equals_load():
    net = synth(1, areas=1, buses_per_area=1, tielines=0)
    sa = stand_alone_clearing(net, "A")
    assert sum(sa.dispatch) == pytest.approx(net.total_load("A"), abs=1e-6)


def test_excluding_reduces_to_standalone(two_area):
    ex = solve_centralized_excluding(two_area, "A")
    assert ex.cost_excluded == pytest.approx(stand_alone_clearing(two_area, "A").cost)
    assert ex.area_costs["B"] == pytest.approx(
        stand_alone_clearing(two_area, "B").cost, rel=1e-8
    )


def test_excluding_with_fixed_flows(two_area):
    # A keeps exporting 20 MW: B's balance sees 20 MW of free import
    ex = solve_centralized_excluding(two_area, "A", {"T1": 20.0})
    saA = stand_alone_clearing(two_area, "A")
    assert ex.cost_excluded > saA.cost  # A generates the export on top of load
    sb = stand_alone_clearing(two_area.with_loads({"B1": -20.0}), "B")
    assert ex.area_costs["B"] == pytest.approx(sb.cost, rel=1e-8)


def test_exclusion_upper_bounds_full_coupling():
    # leaving any area out (flows frozen at zero) can never beat the jointly
    # cleared cost
    for seed in range(8):
        net = synth(seed + 100, areas=3, buses_per_area=4, tielines=3)
        sol = solve_centralized(net)
        for a in net.areas:
            ex = solve_centralized_excluding(net, a)
            assert ex.total_cost >= sol.total_cost - 1e-6


def test_internalized_limits_disagree_on_capacity_value(two_area):
    # each side enforcing its own +-Tbar bound, with no shared price: the
    # recovered capacity duals differ, so no consensus on capacity value
    duals = {}
    for area in two_area.areas:
        other = "B" if area == "A" else "A"
        sa = stand_alone_clearing(two_area, other)
        solver = AreaSolver(two_area, area, internalize_limits=True)
        res = solver.solve(
            np.array([sa.lmps[f"{other}1"]]), np.zeros(1), np.zeros(1)
        )
        duals[area] = float(res.tie_upper_dual[0] + res.tie_lower_dual[0])
    gap = abs(duals["A"] - duals["B"])
    assert gap > 10 * 1e-6, duals


def test_area_feasibility_helper(two_area):
    ok, worst = area_feasibility(two_area, "A")
    assert ok and worst < 1e-6
