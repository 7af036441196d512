"""Byzantine payload generators.

Attackers are omniscient and collude: they see every honest payload of the
current round (and the honest momentums held by the server) and all
Byzantine workers send the same crafted values. Since momentum lives on the
server, an attack can only act through the k values it sends.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np

from .compression import CompressedGradient, SparseMask, sample_mask
from .errors import RosdhbError

KINDS = ("alie", "sign_flip", "large_value", "zero")


@dataclass(frozen=True)
class AttackSpec:
    """``z`` is a number or ``"auto"`` (the standard ALIE quantile)."""

    kind: str = "alie"
    z: object = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RosdhbError(f"unknown attack {self.kind!r}; expected one of {KINDS}")
        if self.z != "auto" and not float(self.z) >= 0:
            raise RosdhbError(f"ALIE z must be >= 0 or 'auto', got {self.z!r}")
        if not np.isfinite(self.scale):
            raise RosdhbError("attack scale must be finite")

    def resolve_z(self, n, f):
        if self.z != "auto":
            return float(self.z)
        return alie_z_max(n, f)


def alie_z_max(n, f):
    """ALIE strength ``Phi^-1((n - f - s) / (n - f))`` with ``s = floor(n/2) + 1 - f``, clamped at 0."""
    s = n // 2 + 1 - f
    p = (n - f - s) / (n - f)
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        raise RosdhbError(f"ALIE quantile undefined for n={n}, f={f}")
    return max(0.0, NormalDist().inv_cdf(p))


@dataclass
class AttackContext:
    honest_payloads: Sequence[CompressedGradient]
    honest_momentums: Optional[np.ndarray]
    mask: Optional[SparseMask]
    round: int
    server_model: Optional[np.ndarray]
    n: int = 0
    f: int = 0


def _honest_stats(ctx, mask):
    """Per-coordinate population mean and std of honest values under ``mask``."""
    if ctx.mask is not None:
        vals = np.stack([p.values for p in ctx.honest_payloads])
        return vals.mean(axis=0), vals.std(axis=0)
    # local masks: use the honest workers that happened to sample each coordinate
    d = mask.d
    total = np.zeros(d)
    total_sq = np.zeros(d)
    count = np.zeros(d)
    for p in ctx.honest_payloads:
        total[p.mask.indices] += p.values
        total_sq[p.mask.indices] += p.values ** 2
        count[p.mask.indices] += 1
    idx = mask.indices
    c = np.maximum(count[idx], 1)
    mu = total[idx] / c
    var = np.maximum(total_sq[idx] / c - mu ** 2, 0.0)
    return mu, np.sqrt(var)


def craft_payload(spec, ctx, byz_index, rng):
    """Values a Byzantine worker sends this round.

    In global mode the payload is tied to the broadcast mask. In local mode
    the worker draws its own mask from ``rng``; with ``alie`` the statistics
    at each coordinate come from the honest workers that sampled it (zero
    when none did).
    """
    if len(ctx.honest_payloads) == 0:
        raise RosdhbError("attack needs at least one honest payload")
    if ctx.mask is not None:
        mask = ctx.mask
    else:
        ref = ctx.honest_payloads[0].mask
        mask = sample_mask(rng, ref.d, ref.k)
    if spec.kind == "zero":
        values = np.zeros(mask.k)
    elif spec.kind == "large_value":
        values = np.full(mask.k, spec.scale * 1e6)
    else:
        mu, sigma = _honest_stats(ctx, mask)
        if spec.kind == "sign_flip":
            values = -spec.scale * mu
        else:
            values = mu - spec.resolve_z(ctx.n, ctx.f) * sigma
    return CompressedGradient(mask, values)
