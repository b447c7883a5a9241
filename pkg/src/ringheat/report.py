"""Figure rendering for scan and decomposition outputs.

All functions take the same plain data the delimited writers receive and
render a PNG next to it; the CLI enables this with ``--figures``.  Uses the
Agg backend so runs are headless-safe.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "figure_eta_scan",
    "figure_m_scan",
    "figure_example_scan",
    "figure_decompose",
]


def figure_eta_scan(
    etas, currents, series_value: float, slope: float, path: str
) -> str:
    """Log-log plot of |J(eta) - J_series| with the fitted power law."""
    etas = np.asarray(etas, dtype=float)
    gaps = np.abs(np.asarray(currents, dtype=float) - series_value)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.plot(etas, currents, "o-")
    ax1.axhline(series_value, color="gray", ls="--", label="series limit")
    ax1.set_xlabel(r"$\eta$")
    ax1.set_ylabel("J")
    ax1.legend()
    mask = gaps > 0
    ax2.loglog(etas[mask], gaps[mask], "o", label="|J - series|")
    if np.count_nonzero(mask) >= 2:
        ref = gaps[mask][-1] * (etas[mask] / etas[mask][-1]) ** slope
        ax2.loglog(etas[mask], ref, "--", label=f"slope {slope:.2f}")
    ax2.set_xlabel(r"$\eta$")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def figure_m_scan(Ms, currents, path: str) -> str:
    """Current against the mode cutoff at fixed coupling strength."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(Ms, currents, "o-")
    ax.set_xlabel("M")
    ax.set_ylabel("J")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def figure_example_scan(rows, jumps, path: str) -> str:
    """C(x1) profile with error bars and one-sided jump ladders marked."""
    xs = [r[0] for r in rows]
    vals = [r[1] for r in rows]
    errs = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(6.5, 3.8))
    ax.errorbar(xs, vals, yerr=errs, fmt=".-", lw=0.8, ms=3)
    for loc, rep in jumps.items():
        ax.axvline(loc, color="red", ls=":", lw=0.8)
        ax.plot([loc], [rep.left_limit], "r<", ms=5)
        ax.plot([loc], [rep.right_limit], "r>", ms=5)
        tag = "jump" if rep.is_jump else "continuous"
        ax.annotate(tag, (loc, max(vals)), color="red", fontsize=8,
                    ha="center", va="bottom")
    ax.set_xlabel(r"$x_1$")
    ax.set_ylabel(r"$C(x_1)$")
    ax.axhline(0.0, color="gray", lw=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def figure_decompose(by_class: dict, total: float, path: str) -> str:
    """Bar chart of the per-class contributions to the current."""
    names = list(by_class.keys())
    values = [by_class[k] for k in names]
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.bar(names, values)
    ax.axhline(total, color="gray", ls="--", label=f"total {total:.3e}")
    ax.set_ylabel("contribution to J")
    ax.tick_params(axis="x", rotation=20)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
