"""Calibrate the bundled three-area case's cost multipliers.

The heat-rate fit pins the shape of each unit type's cost curve, but the
benchmark outcomes this case is meant to reproduce depend on fitting
choices that are not published. This script searches per-type
multipliers on (c2, c1) plus a global c0 multiplier so that the case's
clearing outcomes (scenario costs, boundary prices, tieline flows and
the congested tieline's capacity price) match the documented benchmark
values, and prints a CALIBRATION table to paste into rts_data.py.

Usage: python tools/calibrate_rts.py [--maxiter N] [--from-current]
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np
from scipy.optimize import least_squares

from intertie import rts_data
from intertie.opf import (
    solve_centralized,
    solve_centralized_excluding,
    stand_alone_clearing,
)

THERMAL = ["U12", "U20", "U76", "U100", "U155", "U197", "U350", "U400"]

# benchmark targets: scenario operation costs ($/h)
COST_TARGETS = {
    ("standalone", "A"): 31843.0,
    ("standalone", "B"): 33366.0,
    ("standalone", "C"): 28537.0,
    ("full", "A"): 29822.0,
    ("full", "B"): 34062.0,
    ("full", "C"): 25995.0,
    ("exclA", "B"): 35295.0,
    ("exclA", "C"): 26162.0,
    ("exclB", "A"): 32757.0,
    ("exclB", "C"): 26534.0,
    ("exclC", "A"): 28986.0,
    ("exclC", "B"): 33667.0,
}
LMP_TARGETS = {
    "A7": 31.1, "B3": 47.8, "A13": 12.7, "B15": 7.3, "A23": 13.0,
    "B17": 10.2, "C25": 15.9, "A21": 7.5, "C18": 16.3, "B23": 16.8,
}
FLOW_TARGETS = {"TL1": 13.1, "TL2": -136.5, "TL3": -34.3, "TL4": -100.0, "TL5": -29.3}
MU4_TARGET = 15.6
# derived settlement targets: per-area coupling gains C_{a,0} + C~_{-a} - C*,
# marginal contributions C*_{-a} - C~_{-a}, and the congestion rent
GAIN_TARGETS = {"A": 3421.0, "B": 2778.0, "C": 1311.0}
CONTRIB_TARGETS = {"A": -1400.0, "B": -3474.0, "C": 1230.0}
RENT_TARGET = 1872.0
SURPLUS_TARGET = 290.0  # 3R + sum of contributions at the exact fee

W_COST, W_LMP, W_FLOW, W_MU = 0.8, 0.55, 0.5, 1.0
W_GAIN, W_RENT, W_SURPLUS = 2.2, 2.2, 2.2
W_CONTRIB = {"A": 2.5, "B": 2.5, "C": 3.5}


def calibration_from(x: np.ndarray) -> dict[str, tuple[float, float, float]]:
    mults = np.exp(x)
    table: dict[str, tuple[float, float, float]] = {}
    for i, t in enumerate(THERMAL):
        table[t] = (float(mults[2 * i]), float(mults[2 * i + 1]), float(mults[-1]))
    table["U50"] = (1.0, 1.0, 1.0)
    return table


def residuals(x: np.ndarray, verbose: bool = False) -> np.ndarray:
    net = rts_data.build(calibration_from(x))
    res = []
    sa = {a: stand_alone_clearing(net, a).cost for a in net.areas}
    full = solve_centralized(net)
    excl = {a: solve_centralized_excluding(net, a) for a in net.areas}
    model_costs = {}
    for (scen, area), target in COST_TARGETS.items():
        if scen == "standalone":
            value = sa[area]
        elif scen == "full":
            value = full.area_costs[area]
        else:
            value = excl[scen[-1]].area_costs[area]
        model_costs[(scen, area)] = value
        res.append(W_COST * (value - target) / target)
    for bus, target in LMP_TARGETS.items():
        res.append(W_LMP * (full.lmps[bus] - target) / 15.0)
    for tid, target in FLOW_TARGETS.items():
        res.append(W_FLOW * (full.flows[tid] - target) / 30.0)
    res.append(W_MU * (full.capacity_prices["TL4"] - MU4_TARGET) / 8.0)

    gains = {}
    contribs = {}
    for a in net.areas:
        others = excl[a].cost_others
        gains[a] = sa[a] + others - full.total_cost
        contribs[a] = full.cost_excluding(a) - others
        res.append(W_GAIN * (gains[a] - GAIN_TARGETS[a]) / abs(GAIN_TARGETS[a]))
        res.append(
            W_CONTRIB[a] * (contribs[a] - CONTRIB_TARGETS[a]) / abs(CONTRIB_TARGETS[a])
        )
    rent = sum(
        (full.lmps[t.to_bus] - full.lmps[t.from_bus]) * full.flows[t.id]
        for t in net.tielines
    )
    res.append(W_RENT * (rent - RENT_TARGET) / RENT_TARGET)
    surplus = 3.0 * min(gains.values()) + sum(contribs.values())
    res.append(W_SURPLUS * (surplus - SURPLUS_TARGET) / 600.0)
    if verbose:
        print("costs:")
        for key, target in COST_TARGETS.items():
            print(f"  {key}: {model_costs[key]:9.0f} vs {target:9.0f}")
        print("lmps:", {b: round(full.lmps[b], 1) for b in LMP_TARGETS})
        print("flows:", {t: round(full.flows[t], 1) for t in FLOW_TARGETS})
        print("mu4:", round(full.capacity_prices["TL4"], 2))
        print("gains:", {a: round(g) for a, g in gains.items()},
              "fee:", round(min(gains.values())))
        print("contribs:", {a: round(m) for a, m in contribs.items()})
        print("rent:", round(rent), "surplus:", round(surplus))
    return np.array(res)


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--maxiter", type=int, default=40)
    ap.add_argument("--from-current", action="store_true",
                    help="start from the CALIBRATION table instead of identity")
    args = ap.parse_args()

    if args.from_current:
        x0 = []
        for t in THERMAL:
            m2, m1, _ = rts_data.CALIBRATION[t]
            x0.extend([np.log(m2), np.log(m1)])
        x0.append(np.log(rts_data.CALIBRATION[THERMAL[0]][2]))
        x0 = np.array(x0)
    else:
        x0 = np.zeros(2 * len(THERMAL) + 1)

    t0 = time.time()
    print("initial cost:", 0.5 * np.sum(residuals(x0, verbose=True) ** 2))
    out = least_squares(
        residuals,
        x0,
        bounds=(np.full_like(x0, np.log(0.45)), np.full_like(x0, np.log(2.2))),
        diff_step=2e-3,
        max_nfev=args.maxiter * (len(x0) + 1),
        verbose=2,
    )
    print(f"done in {time.time() - t0:.0f}s, final cost {out.cost:.5f}")
    residuals(out.x, verbose=True)
    table = calibration_from(out.x)
    print("\nCALIBRATION = {")
    for t in [*THERMAL, "U50"]:
        m2, m1, m0 = table[t]
        print(f'    "{t}": ({m2:.6f}, {m1:.6f}, {m0:.6f}),')
    print("}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
