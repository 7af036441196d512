"""Round loop for RoSDHB, its local-sparsification variant and robust DGD baselines.

One round of ``rosdhb_global``:

1. the server draws one RandK mask and broadcasts it with the model;
2. honest workers send their gradient values under that mask;
3. Byzantine workers send crafted values under the same mask;
4. the server rescales every payload by d/k, updates a per-worker momentum
   ``m_i = beta * m_i + (1 - beta) * g~_i``, aggregates the momentums with a
   robust rule and takes a step ``theta -= gamma * R``.

``rosdhb_local`` lets every worker draw its own mask. ``robust_dgd`` is the
``beta = 0`` case and ``dgd`` further replaces the aggregator with the mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import List, Optional, Sequence

import numpy as np

from .aggregation import AggregatorSpec, aggregate, audit_kappa
from .attacks import AttackContext, AttackSpec, craft_payload
from .compression import (
    CompressedGradient,
    CompressorSpec,
    SparseMask,
    compress,
    payload_bytes,
    reconstruct,
    sample_mask,
)
from .errors import BreakdownError, ConfigError, DivergenceError, RosdhbError
from .vector import RngStream, derive_stream

ALGORITHMS = ("rosdhb_global", "rosdhb_local", "robust_dgd", "dgd")
GLOBAL_CONSTANT = 23200.0
LOCAL_KAPPA_CONSTANT = 368640.0
DIVERGENCE_NORM = 1e12
AUDIT_TRIALS = 1000


@dataclass
class RunConfig:
    algorithm: str = "rosdhb_global"
    n: int = 10
    f: int = 0
    byz_indices: Optional[Sequence[int]] = None  # default: the last f workers
    compressor: CompressorSpec = field(default_factory=CompressorSpec)
    aggregator: AggregatorSpec = field(default_factory=AggregatorSpec)
    attack: AttackSpec = field(default_factory=AttackSpec)
    T: int = 1000
    lr_mode: str = "tuned"
    gamma: float = 0.01
    beta: float = 0.9
    gradient_mode: str = "full"
    batch: Optional[int] = None
    seed: int = 0
    diagnostics: bool = True
    eval_every: int = 50
    oracle_every: int = 1
    kappa_hat: Optional[float] = None
    local_b2_variant: bool = False
    stop_accuracy: Optional[float] = None
    theta0: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.lr_mode not in ("theoretical", "tuned"):
            raise ConfigError(f"lr_mode must be 'theoretical' or 'tuned', got {self.lr_mode!r}")
        if self.gradient_mode not in ("full", "stochastic"):
            raise ConfigError(f"gradient_mode must be 'full' or 'stochastic', got {self.gradient_mode!r}")
        if self.n < 1 or not (0 <= self.f) or 2 * self.f >= self.n:
            raise BreakdownError(
                f"breakdown point exceeded: need 0 <= f < n/2, got n={self.n}, f={self.f}"
            )
        if self.byz_indices is None:
            self.byz_indices = list(range(self.n - self.f, self.n))
        self.byz_indices = sorted(int(j) for j in self.byz_indices)
        if len(set(self.byz_indices)) != self.f or any(not 0 <= j < self.n for j in self.byz_indices):
            raise ConfigError(f"byz_indices must be {self.f} distinct indices in [0, {self.n})")
        if self.T < 0 or self.eval_every < 1 or self.oracle_every < 1:
            raise ConfigError("T must be >= 0 and eval/oracle cadences >= 1")
        if not (0.0 <= self.beta < 1.0):
            raise ConfigError(f"beta must lie in [0, 1), got {self.beta}")

    @property
    def honest(self):
        byz = set(self.byz_indices)
        return [i for i in range(self.n) if i not in byz]

    @property
    def mode(self):
        return "local" if self.algorithm == "rosdhb_local" else "global"

    def effective_aggregator(self):
        if self.algorithm == "dgd":
            return AggregatorSpec("mean", "none", 0)
        return self.aggregator


@dataclass
class RoundRecord:
    t: int
    grad_norm_sq: float
    loss: float
    delta_sq: float
    upsilon: float
    xi_sq: float
    xi_bound_ok: Optional[bool]
    bytes_up: int
    accuracy: Optional[float] = None

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class FinalReport:
    theta: np.ndarray
    theta_hat: np.ndarray
    theta_hat_index: int
    grad_norm_sq_mean: float
    grad_norm_sq_min: float
    total_bytes: int
    gamma: float
    beta: float
    k: int
    alpha: float
    kappa_hat: Optional[float]
    b_hat: Optional[float]
    kappa_b2_ok: Optional[bool]


@dataclass
class RunResult:
    records: List[RoundRecord]
    report: FinalReport
    trace: Optional[dict] = None


def theoretical_schedule(mode, k, d, L, kappa_hat=0.0, b_squared=None):
    """Learning rate and momentum from the convergence theorems.

    ``gamma = (k/d) / (c L)`` with ``c = 23200`` (global) or
    ``c = max(23200, 368640 kappa)`` (local), and ``beta = sqrt(1 - 24 gamma L)``.
    Passing ``b_squared`` in local mode divides ``gamma`` by ``1 + B^2`` as well.
    """
    if not L > 0:
        raise RosdhbError(f"smoothness constant must be positive, got {L}")
    if not (1 <= k <= d):
        raise RosdhbError(f"need 1 <= k <= d, got k={k}, d={d}")
    if mode == "global":
        c = GLOBAL_CONSTANT
    elif mode == "local":
        c = max(GLOBAL_CONSTANT, LOCAL_KAPPA_CONSTANT * kappa_hat)
        if b_squared is not None:
            c *= 1.0 + b_squared
    else:
        raise RosdhbError(f"mode must be 'global' or 'local', got {mode!r}")
    gamma = (k / d) / (c * L)
    beta = math.sqrt(1.0 - 24.0 * gamma * L)
    return gamma, beta


def check_lemma_bounds(record, kappa_hat):
    """Whether the aggregation error obeys ``||xi||^2 <= kappa * Upsilon`` this round."""
    return bool(record.xi_sq <= kappa_hat * record.upsilon + 1e-12)


def audited_kappa(spec, n, f, d, seed=0, trials=AUDIT_TRIALS):
    """kappa-hat for ``spec`` at (n, f); zero for the plain mean with f = 0."""
    if spec.base == "mean" and spec.pre == "none" and f == 0:
        return 0.0
    audit = audit_kappa(spec, n, f, min(d, 8), trials, RngStream(seed, 0x6B61707061))
    return audit.kappa_hat


def _validate(cfg, obj):
    if obj.num_workers != cfg.n:
        raise ConfigError(f"objective has {obj.num_workers} workers, config says n={cfg.n}")
    if list(obj.honest) != cfg.honest:
        raise ConfigError("objective's honest set does not match the config's byz_indices")
    cfg.effective_aggregator().check(cfg.n)
    if cfg.gradient_mode == "stochastic" and cfg.batch is not None and cfg.batch < 1:
        raise ConfigError("batch must be positive")


def run(cfg, obj, trace=False):
    """Execute ``cfg.T`` rounds on ``obj`` and return per-round records plus a final report.

    With ``trace=True`` the result also carries per-round vectors (honest
    momentum mean, honest mean of reconstructed gradients, oracle gradient)
    so the momentum-deviation recursion can be checked externally.
    """
    _validate(cfg, obj)
    d = obj.dim
    n = cfg.n
    H = np.array(cfg.honest, dtype=np.int64)
    byz = list(cfg.byz_indices)
    spec = cfg.effective_aggregator()
    k, alpha = cfg.compressor.resolve(d)
    mode = cfg.mode
    custom = cfg.compressor.kind == "custom-unbiased"
    per_worker_bytes = payload_bytes(k, mode)

    L = getattr(obj, "smoothness", None)
    b_hat = None
    if getattr(obj, "dissimilarity", None) is not None:
        b_hat = obj.dissimilarity[1]

    kappa_hat = cfg.kappa_hat
    need_kappa = cfg.diagnostics or (cfg.lr_mode == "theoretical" and mode == "local")
    if kappa_hat is None and need_kappa:
        kappa_hat = audited_kappa(spec, n, spec.f, d, seed=cfg.seed)

    if cfg.algorithm in ("robust_dgd", "dgd"):
        if cfg.lr_mode == "theoretical":
            raise ConfigError("theoretical schedule is defined only for the RoSDHB variants")
        gamma, beta = cfg.gamma, 0.0
    elif cfg.lr_mode == "theoretical":
        if not L:
            raise ConfigError("theoretical schedule needs the objective's smoothness constant")
        b2 = b_hat ** 2 if (cfg.local_b2_variant and b_hat is not None) else None
        gamma, beta = theoretical_schedule(mode, k, d, L, kappa_hat or 0.0, b2)
    else:
        gamma, beta = cfg.gamma, cfg.beta

    master = RngStream(cfg.seed)
    theta = (
        np.asarray(cfg.theta0, dtype=np.float64).copy()
        if cfg.theta0 is not None
        else obj.initial_point(derive_stream(master, "init"))
    )
    M = np.zeros((n, d))
    hat_index = int(derive_stream(master, "output").integers(0, max(cfg.T, 1)))
    theta_hat = theta.copy()
    has_accuracy = hasattr(obj, "accuracy")
    stochastic = cfg.gradient_mode == "stochastic"

    records = []
    tr = {"m_bar": [], "g_bar": [], "grad": [], "R": []} if trace else None
    gn_sum = 0.0
    gn_count = 0
    gn_min = math.inf
    total_bytes = 0

    for t in range(1, cfg.T + 1):
        if t - 1 == hat_index:
            theta_hat = theta.copy()
        oracle_round = t == 1 or t % cfg.oracle_every == 0 or t == cfg.T

        # (a) masks
        if mode == "global":
            mask = SparseMask.full(d) if custom else sample_mask(derive_stream(master, f"mask/{t}"), d, k)
            masks = {i: mask for i in H}
        else:
            mask = None
            masks = {
                int(i): sample_mask(derive_stream(master, f"mask/{t}/{i}"), d, k) for i in H
            }

        # (b) honest gradients and payloads
        if stochastic:
            rngs = [derive_stream(master, f"grad/{t}/{i}") for i in H]
            G = obj.stochastic_gradients(theta, H, cfg.batch, rngs)
        else:
            G = obj.gradients(theta, H)
        Gt = np.zeros((n, d))
        payloads = []
        if custom:
            for row, i in enumerate(H):
                est = cfg.compressor.fn(G[row], derive_stream(master, f"compress/{t}/{i}"))
                Gt[i] = est
                payloads.append(CompressedGradient(mask, est))
        else:
            for row, i in enumerate(H):
                c = compress(G[row], masks[int(i)])
                payloads.append(c)
                Gt[i] = reconstruct(c)

        # (c) Byzantine payloads
        if byz:
            ctx = AttackContext(
                honest_payloads=payloads,
                honest_momentums=M[H],
                mask=mask,
                round=t,
                server_model=theta,
                n=n,
                f=cfg.f,
            )
            # one shared stream per round: colluding workers send the same payload
            byz_rng_label = f"byz/{t}"
            for j in byz:
                c = craft_payload(cfg.attack, ctx, j, derive_stream(master, byz_rng_label))
                if mode == "global" and c.mask != mask:
                    raise RosdhbError("Byzantine payload does not use the broadcast mask")
                Gt[j] = reconstruct(c)

        # (d) momentum, (e) aggregation and model step
        M *= beta
        M += (1.0 - beta) * Gt
        R = aggregate(spec, M)

        grad_norm_sq = loss = delta_sq = upsilon = xi_sq = float("nan")
        xi_ok = None
        if oracle_round:
            grad_H = obj.honest_avg_gradient(theta)
            grad_norm_sq = float(grad_H @ grad_H)
            loss = obj.honest_avg_loss(theta)
            gn_sum += grad_norm_sq
            gn_count += 1
            gn_min = min(gn_min, grad_norm_sq)
            if cfg.diagnostics:
                m_bar = M[H].mean(axis=0)
                delta = m_bar - grad_H
                delta_sq = float(delta @ delta)
                upsilon = float(((M[H] - m_bar) ** 2).sum(axis=1).mean())
                xi = R - m_bar
                xi_sq = float(xi @ xi)
                if kappa_hat is not None:
                    xi_ok = bool(xi_sq <= kappa_hat * upsilon + 1e-12)
            if trace:
                tr["m_bar"].append(M[H].mean(axis=0))
                tr["g_bar"].append(Gt[H].mean(axis=0))
                tr["grad"].append(grad_H)
                tr["R"].append(R.copy())

        theta = theta - gamma * R
        if not np.all(np.isfinite(theta)) or float(np.linalg.norm(theta)) > DIVERGENCE_NORM:
            raise DivergenceError(f"model diverged at round {t}", round_index=t)

        accuracy = None
        if has_accuracy and (t % cfg.eval_every == 0 or t == cfg.T):
            accuracy = obj.accuracy(theta)

        bytes_up = n * per_worker_bytes
        total_bytes += bytes_up
        records.append(
            RoundRecord(t, grad_norm_sq, loss, delta_sq, upsilon, xi_sq, xi_ok, bytes_up, accuracy)
        )
        if cfg.stop_accuracy is not None and accuracy is not None and accuracy >= cfg.stop_accuracy:
            break

    kappa_b2_ok = None
    if kappa_hat is not None and b_hat is not None:
        kappa_b2_ok = kappa_hat * b_hat ** 2 <= 1.0 / 25.0
    report = FinalReport(
        theta=theta,
        theta_hat=theta_hat,
        theta_hat_index=hat_index,
        grad_norm_sq_mean=gn_sum / gn_count if gn_count else float("nan"),
        grad_norm_sq_min=gn_min if gn_count else float("nan"),
        total_bytes=total_bytes,
        gamma=gamma,
        beta=beta,
        k=k,
        alpha=alpha,
        kappa_hat=kappa_hat,
        b_hat=b_hat,
        kappa_b2_ok=kappa_b2_ok,
    )
    if trace:
        tr = {key: np.array(v) for key, v in tr.items()}
    return RunResult(records, report, tr)
