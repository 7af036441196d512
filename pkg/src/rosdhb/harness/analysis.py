"""Convergence-rate fits and communication-cost curves."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import RosdhbError

log = logging.getLogger(__name__)

MIN_FIT_POINTS = 10
FIT_SAMPLES = 400
TAIL_FRACTION = 0.05


@dataclass
class RateFit:
    slope: float
    intercept: float
    r2: float
    window: tuple
    floor: float = 0.0
    points: int = 0


def _values(records):
    if len(records) and hasattr(records[0], "grad_norm_sq"):
        return np.array([r.grad_norm_sq for r in records], dtype=np.float64)
    return np.asarray(records, dtype=np.float64)


def running_mean(values):
    """Mean over the first t entries, skipping rounds without a measurement (nan)."""
    values = np.asarray(values, dtype=np.float64)
    ok = ~np.isnan(values)
    counts = np.cumsum(ok)
    sums = np.cumsum(np.where(ok, values, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def tail_plateau(values, fraction=TAIL_FRACTION):
    values = np.asarray(values, dtype=np.float64)
    tail = values[-max(1, int(round(len(values) * fraction))):]
    return float(np.nanmean(tail))


def fit_rate(records, window=None, floor=False, running=True):
    """Fit ``log y = slope * log t + intercept`` over ``window = (t_min, t_max)``.

    ``y`` is the running mean of the per-round squared gradient norm when
    ``running`` is true, otherwise the given sequence itself (round t is
    entry t-1). With ``floor`` the tail plateau (mean of the last 5% of the
    raw sequence) is subtracted first and nonpositive points are dropped.
    Points are sampled on a geometric grid of rounds so every decade weighs
    the same.
    """
    raw = _values(records)
    T = raw.size
    y = running_mean(raw) if running else raw.copy()
    plateau = tail_plateau(raw) if floor else 0.0
    y = y - plateau
    t_min, t_max = window or (1, T)
    t_min, t_max = max(1, int(t_min)), min(T, int(t_max))
    if t_max <= t_min:
        raise RosdhbError(f"empty fit window ({t_min}, {t_max}) for {T} rounds")
    grid = np.unique(np.round(np.geomspace(t_min, t_max, FIT_SAMPLES)).astype(np.int64))
    t = grid.astype(np.float64)
    vals = y[grid - 1]
    keep = np.isfinite(vals) & (vals > 0)
    if keep.sum() < MIN_FIT_POINTS:
        raise RosdhbError(
            f"only {int(keep.sum())} usable points in window ({t_min}, {t_max}); need {MIN_FIT_POINTS}"
        )
    lx, ly = np.log(t[keep]), np.log(vals[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(((ly - pred) ** 2).sum())
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, (t_min, t_max), plateau, int(keep.sum()))


@dataclass
class CostEntry:
    cell: int
    repeat: int
    compression_ratio: float
    f: int
    status: str
    rounds_to_tau: Optional[int]
    bytes_to_tau: Optional[int]
    final_metric: float


@dataclass
class CostReport:
    entries: list

    def successful(self):
        return [e for e in self.entries if e.status == "ok"]


def rounds_and_bytes_to_tau(records, tau):
    """First evaluated round whose accuracy reaches ``tau`` and the bytes sent up to it."""
    total = 0
    for r in records:
        total += r.bytes_up
        if r.accuracy is not None and r.accuracy >= tau:
            return r.t, total
    return None, None


def cost_curve(report):
    """Per (compression ratio, f): mean bytes-to-threshold and savings against k/d = 1.

    Returns a list of dict rows. ``savings`` is ``1 - bytes(ratio) / bytes(1)``;
    it is omitted, with a warning, when no k/d = 1 cell reached the threshold
    for that f.
    """
    entries = [e for e in getattr(report, "entries", report) if e.status == "ok"]
    if not entries:
        raise RosdhbError("cost curve needs at least one successful cell")
    groups = {}
    for e in entries:
        groups.setdefault((float(e.compression_ratio), int(e.f)), []).append(e.bytes_to_tau)
    rows = []
    for (ratio, f), values in sorted(groups.items()):
        reached = [b for b in values if b is not None]
        rows.append(
            {
                "compression_ratio": ratio,
                "f": f,
                "bytes_to_tau": float(np.mean(reached)) if reached else None,
                "reached": len(reached),
                "repeats": len(values),
            }
        )
    baseline = {r["f"]: r["bytes_to_tau"] for r in rows if r["compression_ratio"] == 1.0}
    has_baseline = any(v for v in baseline.values())
    if len(rows) > 1 and not has_baseline:
        log.warning("no k/d = 1 baseline reached the threshold; savings column omitted")
    for r in rows:
        base = baseline.get(r["f"])
        if len(rows) > 1 and base and r["bytes_to_tau"] is not None:
            r["savings"] = 1.0 - r["bytes_to_tau"] / base
    return rows
