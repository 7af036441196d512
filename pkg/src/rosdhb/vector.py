"""Dense vector helpers and reproducible random streams.

Vectors are plain 1-D ``numpy`` arrays of float64. Randomness comes from
``RngStream`` objects backed by the counter-based Philox generator, keyed by
a (seed, stream id) pair so that every consumer (worker, round, trial) can
derive its own stream independent of evaluation order.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import DimensionMismatch, RosdhbError

_MASK64 = (1 << 64) - 1


def as_vector(values, dim=None):
    """Return ``values`` as a finite float64 vector, validating its shape."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {x.shape}")
    if x.size == 0:
        raise DimensionMismatch("vectors must have positive dimension")
    if dim is not None and x.size != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise RosdhbError("vector has non-finite entries")
    return x


def axpy(a, x, y):
    """Return ``a * x + y`` without modifying either input."""
    if not np.isfinite(a):
        raise RosdhbError(f"scale must be finite, got {a}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch(f"axpy operands differ in shape: {x.shape} vs {y.shape}")
    return a * x + y


def squared_norm(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.dot(x, x))


def _mix(seed, stream_id, label):
    digest = hashlib.blake2b(
        f"{seed}:{stream_id}:{label}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """A seeded random stream identified by ``(seed, stream_id)``.

    Two streams with the same pair produce bit-identical draws. Draws advance
    only this object's internal counter.
    """

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        bits = np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        self.generator = np.random.Generator(bits)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id:#x})"

    def uniform(self, size=None):
        return self.generator.random(size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)


def derive_stream(master, label):
    """Derive a child stream from ``master`` deterministically by ``label``.

    The child depends only on ``(master.seed, master.stream_id, label)``,
    never on how many values have been drawn from ``master``.
    """
    return RngStream(master.seed, _mix(master.seed, master.stream_id, label))
