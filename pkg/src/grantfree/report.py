"""Figure rendering for the CLI's ``--plot`` option.

Figures are drawn on bare :class:`matplotlib.figure.Figure` objects, so no
GUI backend or global pyplot state is involved.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

FLOOR = 1e-9


def plot_ccdfs(series, path, ttis_per_second: float, *, threshold_tti: float | None = 7.0,
               target: float | None = 1e-5, title: str = "") -> None:
    """Log-scale CCDFs against delay in ms.

    ``series`` is a list of (label, DelayDistribution) pairs.
    """
    fig = Figure(figsize=(6.4, 4.4))
    ax = fig.add_subplot()
    for label, dist in series:
        t_ms = dist.t * 1e3 / ttis_per_second
        y = np.where(dist.ccdf > 0, dist.ccdf, np.nan)
        style = "--" if dist.label == "empirical" else "-"
        ax.step(t_ms, y, where="post", linestyle=style, label=label)
    if threshold_tti is not None:
        ax.axvline(threshold_tti * 1e3 / ttis_per_second, color="0.5", lw=0.8)
    if target is not None:
        ax.axhline(target, color="0.5", lw=0.8, ls=":")
    ax.set_yscale("log")
    ax.set_ylim(bottom=FLOOR, top=1.5)
    ax.set_xlabel("user-plane delay (ms)")
    ax.set_ylabel("Pr{D > t}")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def plot_attempt_rates(rounds, g, path, *, g_err=None, reference=None, title: str = "") -> None:
    """Attempt rate per transmission round (0 = first transmission).

    ``reference`` is an optional (rounds, g) pair from the analytic chain.
    """
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.add_subplot()
    ax.errorbar(rounds, g, yerr=g_err, fmt="o", label="measured" if reference is not None else None)
    if reference is not None:
        ax.plot(reference[0], reference[1], "s-", mfc="none", label="model")
        ax.legend()
    ax.set_xlabel("transmission round")
    ax.set_ylabel("attempt rate (UEs/TTI)")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def plot_churn(log, path, title: str = "") -> None:
    """Population and RB budget over time from a churn log (tti, n_ues, n_rbs)."""
    log = np.asarray(log)
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.add_subplot()
    if len(log):
        ax.step(log[:, 0], log[:, 1], where="post", label="UEs")
        ax.step(log[:, 0], log[:, 2], where="post", label="RBs")
        ax.legend()
    ax.set_xlabel("TTI")
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
