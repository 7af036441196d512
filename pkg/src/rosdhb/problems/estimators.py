"""Empirical estimates of smoothness and gradient dissimilarity.

Both constants are defined through a supremum over all models; probing a
finite set of points can only give lower estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from ..errors import RosdhbError


@dataclass
class DissimilarityEstimate:
    g: float
    b: float
    residual: float  # largest absolute misfit of the affine model over probes
    degenerate: bool = False

    def __iter__(self):
        return iter((self.g, self.b))


def dissimilarity_terms(obj, theta):
    """Return ``(u, v)``: squared honest-gradient norm and honest gradient spread at ``theta``."""
    grads = obj.gradients(theta, obj.honest)
    avg = grads.mean(axis=0)
    v = float(((grads - avg) ** 2).sum(axis=1).mean())
    return float(avg @ avg), v


def estimate_dissimilarity(obj, thetas):
    """Fit ``v = G^2 + B^2 u`` with nonnegative coefficients over probe points."""
    if len(thetas) < 2:
        raise RosdhbError("need at least two probe points")
    u, v = np.array([dissimilarity_terms(obj, np.asarray(t, dtype=np.float64)) for t in thetas]).T
    if np.ptp(u) <= 1e-12 * max(1.0, np.abs(u).max()):
        g2 = float(v.mean())
        return DissimilarityEstimate(
            float(np.sqrt(g2)), 0.0, float(np.abs(v - g2).max()), degenerate=True
        )
    A = np.column_stack([np.ones_like(u), u])
    # rescale columns so nnls is well conditioned when u spans many decades
    col = np.abs(A).max(axis=0)
    coef, _ = nnls(A / col, v)
    g2, b2 = coef / col
    resid = float(np.abs(A @ np.array([g2, b2]) - v).max())
    return DissimilarityEstimate(float(np.sqrt(g2)), float(np.sqrt(b2)), resid)


def estimate_smoothness(obj, rng, probes, directions=None, step=1.0):
    """Largest observed ``||grad L_H(x) - grad L_H(y)|| / ||x - y||``.

    Each probe pairs a random point with a displaced copy. Displacements are
    the given ``directions`` first (for example known eigenvectors), then the
    coordinate axes, then random Gaussian directions.
    """
    if probes < 1:
        raise RosdhbError("need at least one probe")
    d = obj.dim
    dirs = [np.asarray(v, dtype=np.float64) for v in (directions or [])]
    axes = iter(np.eye(d)) if d <= 256 else iter(())
    best = 0.0
    for p in range(probes):
        x = rng.normal(d)
        if p < len(dirs):
            v = dirs[p]
        else:
            v = next(axes, None)
            if v is None:
                v = rng.normal(d)
        v = v / np.linalg.norm(v) * step
        diff = obj.honest_avg_gradient(x + v) - obj.honest_avg_gradient(x)
        best = max(best, float(np.linalg.norm(diff) / np.linalg.norm(v)))
    return best
