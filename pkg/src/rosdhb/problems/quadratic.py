"""Synthetic quadratic objectives with known smoothness and heterogeneity.

Worker ``i`` holds ``L_i(x) = 1/2 (x - c_i)^T H_i (x - c_i)`` with diagonal
``H_i``. Two families are provided:

* ``shifted``: shared ``H``, centers spread around a common point. Gradient
  dissimilarity is then constant in ``x``, so ``B = 0`` and ``G`` equals
  ``spread_g`` exactly.
* ``scaled``: ``H_i = (1 + s_i) H`` with ``sum_H s_i = 0``. With a shared
  minimizer the dissimilarity is exactly ``B^2 ||grad L_H||^2`` with
  ``B = spread_b``; a nonzero ``spread_g`` also shifts the centers, after
  which (G, B) are left to the estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import RosdhbError
from ..vector import derive_stream
from .base import Objective


@dataclass(frozen=True)
class QuadraticFamilySpec:
    kind: str = "shifted"
    d: int = 50
    n: int = 10
    spread_g: float = 0.0
    spread_b: float = 0.0
    base_curvature: float = 1.0
    condition: float = 1.0  # largest / smallest curvature
    center_norm: float = 1.0  # distance of the honest optimum from the origin
    noise: float = 0.0  # std of additive gradient noise in stochastic mode


class QuadraticObjective(Objective):
    def __init__(self, curvatures, centers, honest, noise=0.0):
        self.curv = np.asarray(curvatures, dtype=np.float64)
        self.centers = np.asarray(centers, dtype=np.float64)
        self.num_workers, self.dim = self.centers.shape
        self.honest = np.asarray(sorted(honest), dtype=np.int64)
        self.noise = noise
        avg = self.curv[self.honest].mean(axis=0)
        self.smoothness = float(avg.max())
        self._avg_curv = avg
        self._avg_center = (self.curv[self.honest] * self.centers[self.honest]).sum(axis=0) / (
            self.curv[self.honest].sum(axis=0)
        )

    def worker_loss(self, i, theta):
        r = theta - self.centers[i]
        return 0.5 * float((self.curv[i] * r * r).sum())

    def full_gradient(self, i, theta):
        return self.curv[i] * (theta - self.centers[i])

    def gradients(self, theta, workers):
        workers = np.asarray(workers)
        return self.curv[workers] * (theta - self.centers[workers])

    def stochastic_gradient(self, i, theta, batch, rng):
        g = self.full_gradient(i, theta)
        if self.noise:
            g = g + rng.normal(self.dim) * (self.noise / np.sqrt(batch))
        return g

    def honest_avg_gradient(self, theta):
        return self.gradients(theta, self.honest).mean(axis=0)

    @property
    def minimizer(self):
        """Minimizer of the honest average loss."""
        return self._avg_center.copy()


def _centered_unit(rng, rows, d, honest, weights):
    """Random rows centered over ``honest`` with mean ``||weights * row||^2`` of 1."""
    u = rng.normal((rows, d))
    u[honest] -= u[honest].mean(axis=0)
    scale = np.sqrt(((weights * u[honest]) ** 2).sum(axis=1).mean())
    return u / scale if scale > 0 else u


def make_quadratic(spec, rng, byz_indices=()):
    """Build a quadratic family instance; ``byz_indices`` are excluded from the honest set."""
    if spec.base_curvature <= 0 or spec.condition < 1:
        raise RosdhbError("curvature must be positive and condition >= 1")
    if spec.kind not in ("shifted", "scaled"):
        raise RosdhbError(f"unknown quadratic family {spec.kind!r}")
    n, d = spec.n, spec.d
    byz = sorted(set(int(j) for j in byz_indices))
    honest = np.array([i for i in range(n) if i not in byz], dtype=np.int64)
    if honest.size == 0:
        raise RosdhbError("need at least one honest worker")
    h = spec.base_curvature * np.geomspace(1.0 / spec.condition, 1.0, d)[::-1]
    direction = derive_stream(rng, "center").normal(d)
    center = direction / np.linalg.norm(direction) * spec.center_norm
    u = _centered_unit(derive_stream(rng, "shift"), n, d, honest, h)
    centers = center + spec.spread_g * u

    scales = np.zeros(n)
    if spec.kind == "scaled" and spec.spread_b > 0:
        if honest.size < 2:
            raise RosdhbError("scaled family needs at least two honest workers")
        w = derive_stream(rng, "scale").normal(n)
        w[byz] = 0.0
        w[honest] -= w[honest].mean()
        w[honest] /= np.sqrt((w[honest] ** 2).mean())
        scales = spec.spread_b * w
    if np.any(1.0 + scales <= 0):
        raise RosdhbError(
            f"non-positive curvature: spread_b={spec.spread_b} too large for this draw"
        )
    curv = (1.0 + scales)[:, None] * h
    obj = QuadraticObjective(curv, centers, honest, noise=spec.noise)
    if spec.kind == "shifted" or spec.spread_b == 0:
        obj.dissimilarity = (float(spec.spread_g), 0.0)
    elif spec.spread_g == 0:
        obj.dissimilarity = (0.0, float(spec.spread_b))
    return obj


def shifted_g_squared(obj):
    """``(1/|H|) sum_H ||H (c_i - c_H)||^2`` for a shared-curvature quadratic."""
    H = obj.honest
    curv = obj.curv[H]
    if not np.allclose(curv, curv[0]):
        raise RosdhbError("closed-form G^2 needs a shared curvature")
    dev = obj.centers[H] - obj.centers[H].mean(axis=0)
    return float(((curv[0] * dev) ** 2).sum(axis=1).mean())
