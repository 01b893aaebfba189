"""Figure rendering for the batch commands.

Every report path writes its figures next to the delimited output. The
Agg backend keeps rendering headless and reproducible.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .coupling import CouplingOutcome
from .incentives import Settlement
from .network import Network
from .opf import CentralizedSolution

__all__ = [
    "plot_lmps",
    "plot_tieline_flows",
    "plot_capacity_prices",
    "plot_boundary_lmps",
    "plot_reductions",
]

_SAVE = dict(dpi=110, bbox_inches="tight", metadata={"Software": None})


def plot_lmps(net: Network, sol: CentralizedSolution, path) -> None:
    fig, ax = plt.subplots(figsize=(8, 3.2))
    offset = 0
    for area in net.areas:
        buses = net.buses_in(area)
        xs = np.arange(offset, offset + len(buses))
        ax.plot(xs, [sol.lmps[b.id] for b in buses], "o", ms=3, label=area)
        offset += len(buses)
    ax.set_xlabel("bus (grouped by area)")
    ax.set_ylabel("price $/MWh")
    ax.legend(title="area", fontsize=8)
    ax.grid(alpha=0.3)
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def _iterations(outcome: CouplingOutcome):
    return np.arange(outcome.iterations + 1)


def plot_tieline_flows(outcome: CouplingOutcome, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ks = _iterations(outcome)
    for tid in outcome.tieline_ids:
        for a, tr in outcome.traces.items():
            if tid in tr.tieline_ids and outcome._end_signs[(a, tid)] == 1.0:
                j = tr.tieline_ids.index(tid)
                ax.plot(ks, tr.t[:, j], lw=1.2, label=tid)
    ax.set_xlabel("iteration")
    ax.set_ylabel("tieline flow MW")
    if outcome.tieline_ids:
        ax.legend(fontsize=8, ncol=2)
    ax.grid(alpha=0.3)
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def plot_capacity_prices(outcome: CouplingOutcome, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ks = _iterations(outcome)
    for i, tid in enumerate(outcome.tieline_ids):
        ax.plot(ks, outcome.mu[:, i], lw=1.2, label=tid)
    ax.set_xlabel("iteration")
    ax.set_ylabel("capacity price $/MWh")
    if outcome.tieline_ids:
        ax.legend(fontsize=8, ncol=2)
    ax.grid(alpha=0.3)
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def plot_boundary_lmps(outcome: CouplingOutcome, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ks = _iterations(outcome)
    seen = set()
    for a in outcome.areas:
        tr = outcome.traces[a]
        for j, bus in enumerate(tr.boundary_buses):
            if bus in seen:
                continue
            seen.add(bus)
            ax.plot(ks, tr.alpha[:, j], lw=1.0, label=bus)
    ax.set_xlabel("iteration")
    ax.set_ylabel("boundary price $/MWh")
    if seen:
        ax.legend(fontsize=7, ncol=3)
    ax.grid(alpha=0.3)
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def plot_reductions(led: Settlement, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.2))
    areas = list(led.areas)
    xs = np.arange(len(areas))
    width = 0.38
    ax.bar(
        xs - width / 2,
        [led.by_area[a].reduction_estimated for a in areas],
        width,
        label="estimated",
    )
    ax.bar(
        xs + width / 2,
        [led.by_area[a].reduction_converged for a in areas],
        width,
        label="converged",
    )
    ax.set_xticks(xs, areas)
    ax.set_ylabel("net cost reduction $")
    ax.axhline(0.0, color="k", lw=0.8)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, axis="y")
    fig.savefig(path, **_SAVE)
    plt.close(fig)
