"""Figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import running_mean  # noqa: E402

# no timestamp/version metadata so reruns write identical files
_PNG_META = {"Software": None}


def _legend(ax, fontsize=7):
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=fontsize)


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_trajectories(series, path, title=None):
    """Log-log running mean of the squared honest gradient norm, one line per label."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, values in series.items():
        y = running_mean(values)
        t = np.arange(1, y.size + 1)
        ok = np.isfinite(y) & (y > 0)
        if ok.any():
            ax.loglog(t[ok], y[ok], label=label, lw=1.2)
    ax.set_xlabel("round t")
    ax.set_ylabel(r"mean of $\|\nabla L_H\|^2$ over first t rounds")
    if title:
        ax.set_title(title)
    _legend(ax)
    ax.grid(True, which="both", alpha=0.3)
    return _finish(fig, path)


def plot_accuracy(series, path, tau=None):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, (t, acc) in series.items():
        ax.plot(t, acc, label=label, lw=1.2)
    if tau is not None:
        ax.axhline(tau, color="k", ls="--", lw=0.8)
    ax.set_xlabel("round t")
    ax.set_ylabel("test accuracy")
    _legend(ax)
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def plot_cost_curve(rows, path):
    """Bytes to reach the accuracy threshold against compression ratio, one line per f."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for f in sorted({r["f"] for r in rows}):
        pts = sorted(
            (r["compression_ratio"], r["bytes_to_tau"])
            for r in rows
            if r["f"] == f and r["bytes_to_tau"] is not None
        )
        if pts:
            x, y = zip(*pts)
            ax.plot(x, y, marker="o", label=f"f={f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("compression ratio k/d")
    ax.set_ylabel("bytes sent to reach threshold")
    _legend(ax)
    ax.grid(True, which="both", alpha=0.3)
    return _finish(fig, path)


def plot_rate_fit(values, fit, path):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    y = running_mean(values) - fit.floor
    t = np.arange(1, y.size + 1)
    ok = np.isfinite(y) & (y > 0)
    ax.loglog(t[ok], y[ok], lw=1.0, label="running mean")
    lo, hi = fit.window
    tt = np.geomspace(lo, hi, 50)
    ax.loglog(tt, np.exp(fit.intercept) * tt ** fit.slope, "k--", label=f"slope {fit.slope:.3f}")
    ax.set_xlabel("round t")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    return _finish(fig, path)
