"""Robust aggregation rules and an empirical auditor for their robustness coefficient.

An aggregator ``F`` is (f, kappa)-robust when, for every input set and every
subset ``S`` of ``n - f`` inputs,

    ||F(x) - mean(x_S)||^2 <= kappa / |S| * sum_{i in S} ||x_i - mean(x_S)||^2.

``audit_kappa`` searches for inputs that make the ratio of the two sides
large and reports the worst value it found. It gives a lower estimate of the
true coefficient, never a certificate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BreakdownError, DimensionMismatch, RosdhbError
from .vector import derive_stream

BASES = ("mean", "cwtm", "geomed")
PRES = ("none", "nnm")
SUBSET_CAP = 200
DENOMINATOR_FLOOR = 1e-15


def _stack(xs):
    if len(xs) == 0:
        raise RosdhbError("cannot aggregate an empty set of vectors")
    X = np.asarray(xs, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("all inputs must be 1-D vectors of equal dimension")
    return X


def mean(xs):
    return _stack(xs).mean(axis=0)


def cwtm(xs, f):
    """Coordinate-wise trimmed mean: drop the f largest and f smallest per coordinate."""
    X = _stack(xs)
    n = X.shape[0]
    if n <= 2 * f:
        raise BreakdownError(f"breakdown point exceeded: n={n} <= 2f={2 * f}")
    kept = np.sort(X, axis=0)[f : n - f]
    # sequential row sum keeps the result bitwise equal to a sort/sum/divide oracle
    total = kept[0].copy()
    for row in kept[1:]:
        total += row
    return total / (n - 2 * f)


def _objective(z, X):
    return float(np.sqrt(((X - z) ** 2).sum(axis=1)).sum())


def geomed(xs, tol=1e-10, max_iter=200):
    """Geometric median by Weiszfeld iteration from the coordinate-wise median.

    When the iterate sits on an input point the Vardi-Zhang modification is
    used, which also detects that the point itself is the median.
    """
    X = _stack(xs)
    z = np.median(X, axis=0)
    best, best_obj = z, _objective(z, X)
    for _ in range(max_iter):
        dist = np.sqrt(((X - z) ** 2).sum(axis=1))
        coincident = dist < 1e-12
        eta = int(coincident.sum())
        far = ~coincident
        if not far.any():
            break
        w = 1.0 / dist[far]
        target = (w[:, None] * X[far]).sum(axis=0) / w.sum()
        if eta:
            pull = (w[:, None] * (X[far] - z)).sum(axis=0)
            r = float(np.sqrt(pull @ pull))
            if r <= eta:
                break
            lam = eta / r
            new = (1.0 - lam) * target + lam * z
        else:
            new = target
        step = float(np.sqrt(((new - z) ** 2).sum()))
        z = new
        obj = _objective(z, X)
        if obj < best_obj:
            best, best_obj = z, obj
        if step < tol:
            break
    best, best_obj = _newton_polish(best, best_obj, X)
    # never worse than the best input point
    point_obj = [_objective(x, X) for x in X]
    j = int(np.argmin(point_obj))
    if point_obj[j] < best_obj:
        best = X[j].copy()
    return best


def _newton_polish(z, obj, X, steps=50):
    """Damped Newton steps with backtracking; Weiszfeld crawls when the median sits near an input."""
    d = X.shape[1]
    for _ in range(steps):
        diff = z - X
        dist = np.sqrt((diff ** 2).sum(axis=1))
        if dist.min() < 1e-12:
            break
        u = diff / dist[:, None]
        grad = u.sum(axis=0)
        hess = (np.eye(d) * (1.0 / dist).sum()) - (u.T * (1.0 / dist)) @ u
        hess += np.eye(d) * 1e-12 * np.trace(hess)
        step = np.linalg.solve(hess, grad)
        t = 1.0
        while t > 1e-12:
            cand = z - t * step
            cand_obj = _objective(cand, X)
            if cand_obj < obj:
                break
            t *= 0.5
        else:
            break
        z, obj = cand, cand_obj
    return z, obj


def nnm(xs, f):
    """Nearest neighbor mixing: replace each input by the mean of its n - f nearest inputs.

    Each input counts as its own nearest neighbor; remaining distance ties are
    broken by lower index.
    """
    X = _stack(xs)
    n = X.shape[0]
    if n <= f:
        raise BreakdownError(f"breakdown point exceeded: n={n} <= f={f}")
    m = n - f
    out = np.empty_like(X)
    for i in range(n):
        dist = ((X - X[i]) ** 2).sum(axis=1)
        dist[i] = -1.0
        nearest = np.argsort(dist, kind="stable")[:m]
        out[i] = X[nearest].mean(axis=0)
    return out


@dataclass(frozen=True)
class AggregatorSpec:
    base: str = "cwtm"
    pre: str = "none"
    f: int = 0

    def __post_init__(self):
        if self.base not in BASES:
            raise RosdhbError(f"unknown aggregator {self.base!r}; expected one of {BASES}")
        if self.pre not in PRES:
            raise RosdhbError(f"unknown pre-aggregation {self.pre!r}; expected one of {PRES}")
        if self.f < 0:
            raise RosdhbError(f"f must be nonnegative, got {self.f}")

    @classmethod
    def parse(cls, text, f):
        """Parse ``cwtm``, ``nnm+cwtm``, ``cwtm-nnm`` and similar spellings."""
        parts = [p for p in text.replace("∘", "+").replace("-", "+").lower().split("+") if p]
        pre = "nnm" if "nnm" in parts else "none"
        bases = [p for p in parts if p != "nnm"]
        if len(bases) != 1:
            raise RosdhbError(f"cannot parse aggregator {text!r}")
        return cls(base=bases[0], pre=pre, f=int(f))

    @property
    def label(self):
        return self.base if self.pre == "none" else f"nnm+{self.base}"

    def check(self, n):
        robust = self.base != "mean" or self.pre == "nnm"
        if robust and n <= 2 * self.f:
            raise BreakdownError(
                f"breakdown point exceeded: {self.label} with n={n} needs n > 2f = {2 * self.f}"
            )


def aggregate(spec, xs):
    X = _stack(xs)
    spec.check(X.shape[0])
    if spec.pre == "nnm":
        X = nnm(X, spec.f)
    if spec.base == "mean":
        return X.mean(axis=0)
    if spec.base == "cwtm":
        return cwtm(X, spec.f)
    return geomed(X)


def kappa_lower_bound(n, f):
    """No aggregation rule is (f, kappa)-robust with kappa below ``f / (n - 2f)``."""
    if n <= 2 * f:
        raise BreakdownError(f"breakdown point exceeded: n={n} <= 2f={2 * f}")
    return f / (n - 2 * f)


def robustness_ratios(output, X, subsets):
    """Ratio of the two sides of the robustness inequality for each subset.

    Subsets whose spread falls below ``DENOMINATOR_FLOOR`` yield ``nan``.
    """
    sub = X[subsets]
    centers = sub.mean(axis=1)
    spread = ((sub - centers[:, None, :]) ** 2).sum(axis=2).mean(axis=1)
    err = ((output - centers) ** 2).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(spread < DENOMINATOR_FLOOR, np.nan, err / spread)
    return ratio


@dataclass
class KappaAudit:
    spec: AggregatorSpec
    n: int
    f: int
    d: int
    kappa_hat: float
    trials: int
    subsets_capped: bool
    worst_case: Optional[dict] = field(default=None, repr=False)

    CSV_FIELDS = ("spec", "n", "f", "d", "trials", "kappa_hat")

    def csv_row(self):
        return {
            "spec": self.spec.label,
            "n": self.n,
            "f": self.f,
            "d": self.d,
            "trials": self.trials,
            "kappa_hat": format(self.kappa_hat, ".17g"),
        }


def _subsets(n, f, rng):
    size = n - f
    if math.comb(n, f) <= SUBSET_CAP:
        combos = list(itertools.combinations(range(n), size))
        return np.array(combos, dtype=np.int64), False
    rows = {tuple(range(size))}
    while len(rows) < SUBSET_CAP:
        rows.add(tuple(sorted(rng.generator.choice(n, size, replace=False).tolist())))
    return np.array(sorted(rows), dtype=np.int64), True


def _construction(kind, n, f, d, rng):
    """Return an (n, d) input set whose last f rows play the Byzantine part."""
    h = n - f
    scale = 10.0 ** (3 * rng.uniform() - 1.0)
    if kind == 0:
        # Gaussian honest cluster, Byzantine points from a shifted wider cloud
        honest = rng.normal((h, d)) * scale
        byz = rng.normal((f, d)) * scale * (1 + 5 * rng.uniform()) + rng.normal(d) * scale * 3
    elif kind == 1:
        # far outliers, all at one random point at distance R
        honest = rng.normal((h, d)) * scale
        direction = rng.normal(d)
        direction /= np.linalg.norm(direction)
        radius = scale * 10.0 ** (4 * rng.uniform())
        byz = np.tile(direction * radius, (f, 1))
    elif kind == 2:
        # collinear two-cluster: f points at a*u, n - f at the origin
        direction = rng.normal(d)
        direction /= np.linalg.norm(direction)
        a = scale * (0.5 + rng.uniform())
        honest = np.zeros((h, d))
        byz = np.tile(direction * a, (f, 1))
        jitter = 10.0 ** (-6 - 6 * rng.uniform())
        honest += rng.normal((h, d)) * a * jitter
    else:
        # ALIE-style: identical Byzantine points a few std devs off the honest mean
        honest = rng.normal((h, d)) * scale
        mu = honest.mean(axis=0)
        sigma = honest.std(axis=0)
        z = 4 * rng.uniform()
        sign = np.where(rng.uniform(d) < 0.5, -1.0, 1.0) if rng.uniform() < 0.5 else -1.0
        byz = np.tile(mu + sign * z * sigma, (f, 1))
    return np.vstack([honest, byz]) if f else honest


def audit_kappa(spec, n, f, d, trials, rng, refine_fraction=0.2):
    """Search for inputs maximizing the robustness ratio of ``spec``.

    Random constructions (Gaussian clusters, far outliers, collinear
    two-cluster sets, ALIE-like shifts) are followed by a hill-climbing phase
    that perturbs the worst case found so far. Ratios are evaluated on every
    size-(n - f) subset when there are at most 200 of them, otherwise on 200
    random subsets.
    """
    if n <= 2 * f:
        raise BreakdownError(f"breakdown point exceeded: n={n} <= 2f={2 * f}")
    spec.check(n)
    subsets, capped = _subsets(n, f, derive_stream(rng, "subsets"))
    best = 0.0
    worst = None
    n_refine = int(trials * refine_fraction) if f else 0
    n_random = trials - n_refine
    for t in range(n_random):
        trial_rng = derive_stream(rng, f"trial/{t}")
        X = _construction(t % 4, n, f, d, trial_rng)
        ratios = robustness_ratios(aggregate(spec, X), X, subsets)
        if np.all(np.isnan(ratios)):
            continue
        j = int(np.nanargmax(ratios))
        if ratios[j] > best:
            best = float(ratios[j])
            worst = {"xs": X, "subset": subsets[j].copy()}
    if worst is not None:
        step_rng = derive_stream(rng, "refine")
        X = worst["xs"].copy()
        scale = max(float(np.sqrt(((X - X.mean(axis=0)) ** 2).sum(axis=1).mean())), 1e-12)
        for _ in range(n_refine):
            outside = np.setdiff1d(np.arange(n), worst["subset"])
            cand = X.copy()
            cand[outside] += step_rng.normal((outside.size, d)) * scale * 0.05
            ratios = robustness_ratios(aggregate(spec, cand), cand, subsets)
            if np.all(np.isnan(ratios)):
                continue
            j = int(np.nanargmax(ratios))
            if ratios[j] > best:
                best = float(ratios[j])
                X = cand
                worst = {"xs": cand, "subset": subsets[j].copy()}
    return KappaAudit(spec, n, f, d, best, trials, capped, worst)
