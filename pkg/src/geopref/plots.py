"""Figure rendering for run reports.

Figures are written straight to files (Agg backend); the CLI drops them
next to the CSV output.  Everything here is presentation only; numbers
come from the other modules.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .degree import DegreeTable


def save_trajectory_figure(path, steps, trajectories, nu=None, title=""):
    """Per-location edge-end fractions over time; one line per location,
    dashed horizontals at the limit measure when given."""
    traj = np.asarray(trajectories, dtype=float)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for i in range(traj.shape[1]):
        ax.plot(steps, traj[:, i], lw=1.2, label=f"location {i}")
    if nu is not None:
        for i, v in enumerate(np.asarray(nu, dtype=float)):
            ax.axhline(v, color=f"C{i % 10}", ls="--", lw=0.8, alpha=0.7)
    ax.set_xlabel("step")
    ax.set_ylabel("edge-end fraction")
    if title:
        ax.set_title(title)
    if traj.shape[1] <= 12:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_degree_figure(path, table: DegreeTable, title=""):
    """Log-log degree distribution: empirical points vs. theoretical law."""
    ds = [r[0] for r in table.rows]
    emp = [r[2] for r in table.rows]
    theo = [r[3] for r in table.rows]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    pos = [(d, e) for d, e in zip(ds, emp) if e > 0]
    if pos:
        ax.loglog([d for d, _ in pos], [e for _, e in pos], "o", ms=4,
                  label="empirical", alpha=0.8)
    ax.loglog(ds, theo, "-", lw=1.2, label="limit law")
    ax.set_xlabel("degree")
    ax.set_ylabel("fraction of vertices")
    ax.set_title(title or f"location {table.location}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_measure_figure(path, mu, nu, phi=None, labels=None, title=""):
    """Newcomer weights vs. limit measure per location, fitness overlaid."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    idx = np.arange(mu.shape[0])
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar(idx - 0.2, mu, width=0.4, label="newcomer weight")
    ax.bar(idx + 0.2, nu, width=0.4, label="limit measure")
    ax.set_xticks(idx)
    if labels is not None:
        ax.set_xticklabels(labels, fontsize=7)
    ax.set_xlabel("location")
    ax.set_ylabel("mass")
    if phi is not None:
        ax2 = ax.twinx()
        ax2.plot(idx, np.asarray(phi, dtype=float), "k.-", lw=1, ms=5,
                 label="fitness")
        ax2.set_ylabel("fitness")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8, loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_interval_figure(path, intervals, title=""):
    """Fitness cross-check: coarse prefix sums vs. exact interval measure."""
    bs = [iv["b"] for iv in intervals]
    fig, (ax, axg) = plt.subplots(2, 1, figsize=(6.5, 5.5), sharex=True,
                                  height_ratios=[3, 1])
    ax.plot(bs, [iv["coarse"] for iv in intervals], "o-", ms=4, label="cell sums")
    ax.plot(bs, [iv["exact"] for iv in intervals], "s--", ms=4, label="interval measure")
    ax.set_ylabel("mass of [a, b]")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    axg.bar(bs, [iv["gap"] for iv in intervals],
            width=0.8 * (bs[1] - bs[0] if len(bs) > 1 else 0.05))
    axg.set_xlabel("interval right end b")
    axg.set_ylabel("gap")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
