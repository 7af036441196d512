"""RandK sparsification and the unbiased-compressor contract.

In global mode the server draws one mask per round and every worker sends
only the ``k`` values under it; in local mode each worker draws its own mask
and sends (index, value) pairs. Payload sizes follow that difference:
8 bytes per value, plus 4 bytes per index in local mode.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, RosdhbError

VALUE_BYTES = 8
INDEX_BYTES = 4
MAX_ENUMERATION_DIM = 12


@dataclass(frozen=True, eq=False)
class SparseMask:
    indices: np.ndarray
    d: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise RosdhbError("mask must hold at least one index")
        if self.d < idx.size:
            raise RosdhbError(f"mask has {idx.size} indices but d={self.d}")
        if idx[0] < 0 or idx[-1] >= self.d or np.any(np.diff(idx) <= 0):
            raise RosdhbError("mask indices must be strictly increasing and lie in [0, d)")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def k(self):
        return int(self.indices.size)

    def __eq__(self, other):
        return (
            isinstance(other, SparseMask)
            and self.d == other.d
            and np.array_equal(self.indices, other.indices)
        )

    def __hash__(self):
        return hash((self.d, self.indices.tobytes()))

    @classmethod
    def full(cls, d):
        return cls(np.arange(d), d)


@dataclass(frozen=True)
class CompressedGradient:
    """The k on-wire values of a gradient, ordered by ascending mask index."""

    mask: SparseMask
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.mask.k,):
            raise DimensionMismatch(f"expected {self.mask.k} values, got shape {v.shape}")
        object.__setattr__(self, "values", v)


@dataclass
class CompressorSpec:
    """Which compressor a run uses.

    ``ratio`` is k/d for ``randk``. For ``custom-unbiased``, ``fn`` maps
    ``(x, rng)`` to an unbiased dense estimate and ``alpha`` bounds its
    second moment, ``E||C(x)||^2 <= alpha ||x||^2``.
    """

    kind: str = "randk"
    ratio: float = 1.0
    alpha: Optional[float] = None
    fn: Optional[Callable] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("randk", "identity", "custom-unbiased"):
            raise RosdhbError(f"unknown compressor kind {self.kind!r}")
        if self.kind == "identity":
            self.ratio = 1.0
            self.alpha = 1.0
        if not (0.0 < self.ratio <= 1.0):
            raise RosdhbError(f"compression ratio must lie in (0, 1], got {self.ratio}")
        if self.kind == "custom-unbiased" and (self.fn is None or self.alpha is None):
            raise RosdhbError("custom-unbiased compressor needs fn and alpha")
        if self.alpha is not None and self.alpha < 1.0:
            raise RosdhbError(f"alpha must be >= 1, got {self.alpha}")

    def resolve(self, d):
        """Return ``(k, alpha)`` for dimension ``d``."""
        if self.kind == "identity":
            return d, 1.0
        if self.kind == "custom-unbiased":
            return d, float(self.alpha)
        k = resolve_k(self.ratio, d)
        self.alpha = d / k
        return k, self.alpha


def resolve_k(ratio, d):
    """Number of kept coordinates: ``round(ratio * d)`` clamped to ``[1, d]``."""
    if not (0.0 < ratio <= 1.0) or not math.isfinite(ratio):
        raise RosdhbError(f"compression ratio must lie in (0, 1], got {ratio}")
    if d < 1:
        raise RosdhbError(f"dimension must be positive, got {d}")
    return int(min(max(round(ratio * d), 1), d))


def sample_mask(rng, d, k):
    """Draw a uniformly random k-subset of ``range(d)`` by partial Fisher-Yates."""
    if not (1 <= k <= d):
        raise RosdhbError(f"need 1 <= k <= d, got k={k}, d={d}")
    if k == d:
        return SparseMask.full(d)
    pool = np.arange(d)
    swaps = rng.integers(np.arange(k), d)
    for i, j in enumerate(swaps.tolist()):
        pool[i], pool[j] = pool[j], pool[i]
    return SparseMask(np.sort(pool[:k]), d)


def compress(g, mask):
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (mask.d,):
        raise DimensionMismatch(f"gradient has shape {g.shape}, mask expects d={mask.d}")
    return CompressedGradient(mask, g[mask.indices])


def reconstruct(c):
    """Server-side unbiased estimate: ``(d/k)`` times the masked gradient."""
    mask = c.mask
    out = np.zeros(mask.d)
    out[mask.indices] = (mask.d / mask.k) * c.values
    return out


def payload_bytes(k, mode):
    if mode == "global":
        return VALUE_BYTES * k
    if mode == "local":
        return (VALUE_BYTES + INDEX_BYTES) * k
    raise RosdhbError(f"unknown sparsification mode {mode!r}")


def exact_moments(g, k):
    """Enumerate every k-mask and return the exact ``(E[g~], E||g~ - g||^2)``."""
    g = np.asarray(g, dtype=np.float64)
    d = g.size
    if d > MAX_ENUMERATION_DIM:
        raise RosdhbError(
            f"d={d} is too large for exact enumeration (limit {MAX_ENUMERATION_DIM})"
        )
    if not (1 <= k <= d):
        raise RosdhbError(f"need 1 <= k <= d, got k={k}, d={d}")
    mean = np.zeros(d)
    second = 0.0
    count = 0
    for combo in itertools.combinations(range(d), k):
        est = reconstruct(compress(g, SparseMask(np.array(combo), d)))
        mean += est
        diff = est - g
        second += float(diff @ diff)
        count += 1
    return mean / count, second / count


def randk_estimate(x, rng, k):
    """One draw of the RandK estimate of ``x``; usable as a custom compressor."""
    x = np.asarray(x, dtype=np.float64)
    return reconstruct(compress(x, sample_mask(rng, x.size, k)))


def audit_unbiased(fn, x, alpha, rng, samples=100_000, sigmas=3.0):
    """Monte-Carlo check of ``E[C(x)] = x`` and ``E||C(x)||^2 <= alpha ||x||^2``.

    Returns a dict with the estimates and a ``passed`` flag; each comparison
    is allowed ``sigmas`` standard errors of slack.
    """
    x = np.asarray(x, dtype=np.float64)
    total = np.zeros_like(x)
    total_sq = np.zeros_like(x)
    norms = np.empty(samples)
    for s in range(samples):
        y = np.asarray(fn(x, rng), dtype=np.float64)
        total += y
        total_sq += y * y
        norms[s] = y @ y
    mean = total / samples
    var = np.maximum(total_sq / samples - mean * mean, 0.0)
    se = np.sqrt(var / samples)
    mean_ok = bool(np.all(np.abs(mean - x) <= sigmas * se + 1e-12))
    second = float(norms.mean())
    second_se = float(norms.std() / math.sqrt(samples))
    bound = alpha * float(x @ x)
    second_ok = second <= bound + sigmas * second_se + 1e-12
    return {
        "mean": mean,
        "mean_se": se,
        "second_moment": second,
        "second_moment_se": second_se,
        "bound": bound,
        "passed": mean_ok and second_ok,
    }
