"""Figures written next to the CSV output (Agg backend, no display)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .diagnostics import METRICS  # noqa: E402

REFERENCE_SLOPES = {"e_X": 3, "e_u": 2, "e_phi": 3, "e_A": 2, "e_div": 2, "e_F": 3}


def plot_energies(report, path) -> Path:
    t = report.column("t")
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in ("F_K", "F_GL", "F_H", "F_total"):
        ax.plot(t, report.column(name), label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_curvature(report, path) -> Path:
    t = report.column("t")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, report.column("Hbar1"), label="phase 1")
    ax.plot(t, report.column("Hbar2"), label="phase 2")
    ax.set_xlabel("t")
    ax.set_ylabel("averaged mean curvature")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_convergence(reports, path) -> Path:
    hs = np.array([r.h for r in reports])
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for m in METRICS:
        e = np.array([getattr(r, m) for r in reports])
        keep = e > 0
        if keep.any():
            line, = ax.loglog(hs[keep], e[keep], "o-", label=m)
            k = REFERENCE_SLOPES[m]
            i = np.flatnonzero(keep)[-1]
            ax.loglog(hs, e[i] * (hs / hs[i]) ** k, ":", color=line.get_color(), lw=0.8)
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.legend(frameon=False, fontsize=8)
    ax.set_title("dotted: reference slopes", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
