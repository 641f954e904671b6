"""Headless matplotlib rendering of simulation traces.

Figures are written next to the CSV output; no interactive backend is
ever touched.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_error_curves(curves: dict, path, title: str = "", ylabel: str = "mean error") -> None:
    """Semilog error-versus-round plot, one line per labeled curve.

    ``curves`` maps label -> 1-d error array indexed by round.
    """
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for label, values in curves.items():
        values = np.asarray(values, dtype=float)
        positive = np.where(values > 0, values, np.nan)
        ax.semilogy(np.arange(len(values)), positive, lw=1.4, label=str(label))
    ax.set_xlabel("round")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8, ncol=2)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def save_trace_figure(trace, path) -> None:
    """Error and envelope curves for one run."""
    rounds = np.arange(trace.rounds_completed + 1)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.semilogy(rounds, np.where(trace.errors_l2 > 0, trace.errors_l2, np.nan),
                lw=1.4, label="mean l2 error")
    ax.semilogy(rounds, np.where(trace.errors_linf > 0, trace.errors_linf, np.nan),
                lw=1.2, label="max linf error")
    if np.all(np.isfinite(trace.envelope)):
        ax.semilogy(rounds, np.where(trace.envelope > 0, trace.envelope, np.nan),
                    lw=1.0, ls="--", label=f"{trace.envelope_kind} envelope")
    ax.set_xlabel("round")
    ax.set_ylabel("error")
    ax.set_title(trace.label + (" (diverged)" if trace.diverged else ""))
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
