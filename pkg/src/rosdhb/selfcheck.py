"""Fast enumeration and oracle checks behind ``rosdhb verify``."""

from __future__ import annotations

import math

import numpy as np

from .aggregation import AggregatorSpec, audit_kappa, cwtm, geomed, kappa_lower_bound
from .compression import exact_moments
from .simulator import theoretical_schedule
from .vector import RngStream


def cwtm_oracle(X, f):
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    out = np.empty(d)
    for j in range(d):
        kept = sorted(X[:, j].tolist())[f : n - f]
        out[j] = sum(kept) / len(kept)
    return out


def check_compressor(vectors=20, seed=0):
    rng = RngStream(seed)
    worst = 0.0
    for d in range(1, 7):
        for _ in range(vectors):
            g = rng.normal(d)
            for k in range(1, d + 1):
                mean, var = exact_moments(g, k)
                worst = max(worst, float(np.abs(mean - g).max()), abs(var - (d / k - 1) * (g @ g)))
    return worst <= 1e-12, f"max deviation {worst:.3g}"


def check_cwtm(instances=200, seed=1):
    rng = RngStream(seed)
    for _ in range(instances):
        n = int(rng.integers(1, 13))
        f = int(rng.integers(0, (n - 1) // 2 + 1))
        d = int(rng.integers(1, 9))
        X = rng.normal((n, d))
        if not np.array_equal(cwtm(X, f), cwtm_oracle(X, f)):
            return False, f"mismatch at n={n}, f={f}, d={d}"
    return True, f"{instances} instances exact"


def check_geomed_1d(instances=50, seed=2):
    rng = RngStream(seed)
    worst = 0.0
    for _ in range(instances):
        m = 2 * int(rng.integers(0, 6)) + 1
        pts = rng.normal(m)
        worst = max(worst, abs(float(geomed(pts[:, None])[0]) - float(np.median(pts))))
    return worst <= 1e-8, f"max deviation {worst:.3g}"


def check_lower_bound(seed=3):
    audit = audit_kappa(AggregatorSpec("cwtm", "nnm", 3), 10, 3, 2, 200, RngStream(seed))
    target = 0.95 * kappa_lower_bound(10, 3)
    return audit.kappa_hat >= target, f"kappa_hat {audit.kappa_hat:.4f} vs {target:.4f}"


def check_schedule():
    gamma, beta = theoretical_schedule("global", 10, 10, 1.0)
    ok = gamma == 1 / 23200 and abs(beta - math.sqrt(1 - 24 / 23200)) <= 1e-15
    return ok, f"gamma={gamma!r}, beta={beta!r}"


CHECKS = {
    "compressor-exact-moments": check_compressor,
    "cwtm-oracle": check_cwtm,
    "geomed-1d-median": check_geomed_1d,
    "kappa-lower-bound-construction": check_lower_bound,
    "theoretical-schedule": check_schedule,
}


def run_all():
    """Run every check; returns a list of ``(name, passed, detail)``."""
    return [(name, *fn()) for name, fn in CHECKS.items()]
