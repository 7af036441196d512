"""Objective interface shared by the synthetic and MNIST problems."""

from __future__ import annotations

import numpy as np


class Objective:
    """Per-worker losses ``L_i`` with gradient oracles.

    Subclasses set ``dim``, ``num_workers`` and ``honest`` (sorted worker
    indices) and implement ``worker_loss`` and ``full_gradient``. The batch
    method ``gradients`` exists so simulators can vectorize; it must agree
    with ``full_gradient`` row by row.
    """

    dim: int
    num_workers: int
    honest: np.ndarray
    smoothness = None  # analytic L when known
    dissimilarity = None  # analytic (G, B) when known

    def worker_loss(self, i, theta):
        raise NotImplementedError

    def full_gradient(self, i, theta):
        raise NotImplementedError

    def stochastic_gradient(self, i, theta, batch, rng):
        return self.full_gradient(i, theta)

    def gradients(self, theta, workers):
        return np.stack([self.full_gradient(i, theta) for i in workers])

    def stochastic_gradients(self, theta, workers, batch, rngs):
        return np.stack(
            [self.stochastic_gradient(i, theta, batch, r) for i, r in zip(workers, rngs)]
        )

    def honest_avg_loss(self, theta):
        return float(np.mean([self.worker_loss(i, theta) for i in self.honest]))

    def honest_avg_gradient(self, theta):
        return self.gradients(theta, self.honest).mean(axis=0)

    def initial_point(self, rng):
        return np.zeros(self.dim)
