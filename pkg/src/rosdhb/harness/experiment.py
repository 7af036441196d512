"""Sweep execution: one CSV of round records per (cell, repeat) plus a summary CSV."""

from __future__ import annotations

import copy
import csv
import dataclasses
import logging
import math
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..errors import RosdhbError
from ..problems import QuadraticFamilySpec, load_mnist, make_quadratic, mnist_objective
from ..problems.mnist import MlpModel, MnistObjective
from ..problems.quadratic import QuadraticObjective
from ..simulator import RoundRecord, run
from ..vector import RngStream, derive_stream
from . import plots
from .analysis import CostEntry, CostReport, rounds_and_bytes_to_tau
from .config import build_run_config

log = logging.getLogger(__name__)

CSV_VERSION = "1"
SUMMARY_FIELDS = [
    "cell", "repeat", "seed", "status", "error", "algorithm", "compression_ratio", "f",
    "gamma", "beta", "rounds", "rounds_to_tau", "bytes_to_tau", "total_bytes",
    "final_metric", "grad_norm_sq_mean", "kappa_hat", "records_csv",
]


def fmt(value):
    """Serialize a cell value; floats keep 17 significant digits."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_records_csv(path, records):
    names = RoundRecord.field_names()
    with open(path, "w", newline="") as fh:
        fh.write(f"# rosdhb-records v{CSV_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in records:
            w.writerow([fmt(getattr(r, k)) for k in names])


def read_records_csv(path):
    """Read a records CSV back into ``RoundRecord`` objects."""
    out = []
    with open(path, newline="") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in rows:
            def num(key, cast=float):
                v = row.get(key, "")
                return cast(v) if v not in ("", None) else None

            ok = row.get("xi_bound_ok", "")
            out.append(
                RoundRecord(
                    t=int(row["t"]),
                    grad_norm_sq=num("grad_norm_sq") if row.get("grad_norm_sq") else math.nan,
                    loss=num("loss") if row.get("loss") else math.nan,
                    delta_sq=num("delta_sq") if row.get("delta_sq") else math.nan,
                    upsilon=num("upsilon") if row.get("upsilon") else math.nan,
                    xi_sq=num("xi_sq") if row.get("xi_sq") else math.nan,
                    xi_bound_ok=None if ok == "" else ok == "true",
                    bytes_up=int(row["bytes_up"]),
                    accuracy=num("accuracy"),
                )
            )
    return out


@lru_cache(maxsize=4)
def _mnist(root):
    return load_mnist(root)


def build_objective(problem, cfg):
    """Construct the objective for one run; its randomness comes from ``problem.seed``."""
    kind = problem.get("kind", "quadratic")
    seed = int(problem.get("seed", cfg.seed))
    rng = derive_stream(RngStream(seed), "problem")
    if kind == "quadratic":
        params = {k: v for k, v in problem.items() if k not in ("kind", "seed")}
        params["kind"] = params.pop("family", "shifted")
        if int(params.pop("n", cfg.n)) != cfg.n:
            raise RosdhbError(f"quadratic: problem n={problem['n']} != run n={cfg.n}")
        spec = QuadraticFamilySpec(n=cfg.n, **params)
        return make_quadratic(spec, rng, byz_indices=cfg.byz_indices)
    if kind == "mnist":
        n_honest = int(problem.get("n_honest", cfg.n - cfg.f))
        if n_honest + cfg.f != cfg.n:
            raise RosdhbError(f"mnist: n_honest={n_honest} + f={cfg.f} != n={cfg.n}")
        data = _mnist(problem.get("root"))
        model = MlpModel(hidden=int(problem.get("hidden", 15)))
        return mnist_objective(data, n_honest, rng, n_byzantine=cfg.f, model=model)
    raise RosdhbError(f"unknown problem kind {kind!r}")


def _honest_view(obj):
    """The same objective restricted to its honest workers, renumbered from 0."""
    H = np.asarray(obj.honest)
    if isinstance(obj, QuadraticObjective):
        view = QuadraticObjective(obj.curv[H], obj.centers[H], np.arange(H.size), noise=obj.noise)
        view.dissimilarity = getattr(obj, "dissimilarity", None)
        return view
    if isinstance(obj, MnistObjective):
        # honest workers are already 0..n_honest-1; only the Byzantine slots go
        view = copy.copy(obj)
        view.num_workers = H.size
        return view
    raise RosdhbError(f"cannot drop Byzantine workers from {type(obj).__name__}")


def _score(result, tau):
    if tau is not None:
        rounds, _ = rounds_and_bytes_to_tau(result.records, tau)
        accs = [r.accuracy for r in result.records if r.accuracy is not None]
        return (rounds if rounds is not None else math.inf, -(accs[-1] if accs else 0.0))
    return (result.report.grad_norm_sq_mean, 0.0)


def tune_gamma(problem, cfg, grid, T=None, tau=None, clean=True):
    """Pick the learning rate from ``grid`` that does best on ``cfg``.

    The score is the round at which accuracy first reaches ``tau`` (then final
    accuracy), or the trajectory-mean squared gradient norm when there is no
    threshold. Diverging rates score worst. By default the Byzantine workers
    are dropped while tuning; ``clean=False`` tunes against the attack as
    configured. Returns ``(best_gamma, scores)``.
    """
    tune = dataclasses.replace(cfg, T=T or cfg.T, diagnostics=False, stop_accuracy=tau)
    obj = build_objective(problem, cfg)
    if clean:
        obj = _honest_view(obj)
        tune = dataclasses.replace(
            tune,
            n=obj.num_workers,
            f=0,
            byz_indices=[],
            aggregator=dataclasses.replace(cfg.aggregator, f=0),
        )
    scores = {}
    for gamma in grid:
        try:
            res = run(dataclasses.replace(tune, gamma=float(gamma)), obj)
            scores[gamma] = _score(res, tau)
        except RosdhbError as exc:
            log.info("gamma=%s failed during tuning: %s", gamma, exc)
            scores[gamma] = (math.inf, math.inf)
    best = min(grid, key=lambda g: scores[g])
    return float(best), scores


def run_experiment(spec):
    """Run every cell and repeat of ``spec``; returns the ``CostReport``.

    Cells that fail (breakdown, divergence, bad data) are recorded with
    status ``failed`` and the sweep continues.
    """
    out = Path(spec.outputs)
    out.mkdir(parents=True, exist_ok=True)
    sweep_cols = [f"sweep:{k}" for k in spec.sweep]
    entries = []
    rows = []
    series = {}
    acc_series = {}
    tau = spec.target_accuracy
    for idx, overrides, problem, run_dict in spec.cells():
        tuned = {}
        for rep in range(spec.repeats):
            base_seed = int(run_dict.get("seed", 0))
            seed = base_seed + rep
            row = {c: fmt(overrides[c[len("sweep:"):]]) for c in sweep_cols}
            row.update(cell=idx, repeat=rep, seed=seed)
            csv_name = f"cell{idx:03d}_rep{rep:02d}.csv"
            try:
                cfg = build_run_config(dict(run_dict, seed=seed), problem)
                row.update(
                    algorithm=cfg.algorithm,
                    compression_ratio=fmt(cfg.compressor.ratio),
                    f=cfg.f,
                )
                if spec.lr_grid:
                    if "gamma" not in tuned:
                        tuned["gamma"], _ = tune_gamma(
                            problem, cfg, spec.lr_grid, spec.tune_T, tau, clean=spec.tune_clean
                        )
                    cfg = dataclasses.replace(cfg, gamma=tuned["gamma"])
                obj = build_objective(problem, cfg)
                result = run(cfg, obj)
            except RosdhbError as exc:
                row.update(status="failed", error=str(exc))
                rows.append(row)
                ratio = float(row.get("compression_ratio") or _ratio_hint(run_dict))
                entries.append(
                    CostEntry(idx, rep, ratio, int(run_dict.get("f", 0)), "failed", None, None, math.nan)
                )
                log.warning("cell %d repeat %d failed: %s", idx, rep, exc)
                continue
            write_records_csv(out / csv_name, result.records)
            rounds_tau, bytes_tau = (
                rounds_and_bytes_to_tau(result.records, tau) if tau is not None else (None, None)
            )
            accs = [r.accuracy for r in result.records if r.accuracy is not None]
            final_metric = accs[-1] if accs else result.report.grad_norm_sq_mean
            rep_ = result.report
            row.update(
                status="ok",
                error="",
                gamma=fmt(rep_.gamma),
                beta=fmt(rep_.beta),
                rounds=len(result.records),
                rounds_to_tau=fmt(rounds_tau),
                bytes_to_tau=fmt(bytes_tau),
                total_bytes=rep_.total_bytes,
                final_metric=fmt(final_metric),
                grad_norm_sq_mean=fmt(rep_.grad_norm_sq_mean),
                kappa_hat=fmt(rep_.kappa_hat),
                records_csv=csv_name,
            )
            rows.append(row)
            entries.append(
                CostEntry(idx, rep, cfg.compressor.ratio, cfg.f, "ok", rounds_tau, bytes_tau, final_metric)
            )
            label = f"cell{idx}" + "".join(f" {k}={v}" for k, v in overrides.items())
            if spec.repeats > 1:
                label += f" rep{rep}"
            series[label] = [r.grad_norm_sq for r in result.records]
            if accs:
                acc_series[label] = (
                    [r.t for r in result.records if r.accuracy is not None],
                    accs,
                )
    write_summary(out / "summary.csv", rows, sweep_cols)
    if spec.plots:
        plots.plot_trajectories(series, out / "trajectories.png", title=spec.name)
        if acc_series:
            plots.plot_accuracy(acc_series, out / "accuracy.png", tau=tau)
    return CostReport(entries)


def _ratio_hint(run_dict):
    comp = run_dict.get("compressor")
    return comp.get("ratio", 1.0) if isinstance(comp, dict) else 1.0


def write_summary(path, rows, sweep_cols=()):
    header = SUMMARY_FIELDS + list(sweep_cols)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n", restval="")
        w.writeheader()
        for row in rows:
            w.writerow({k: fmt(v) if not isinstance(v, str) else v for k, v in row.items()})


def read_summary(path):
    """Read a summary CSV into ``CostEntry`` objects."""
    entries = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            def opt_int(key):
                v = row.get(key, "")
                return int(float(v)) if v else None

            entries.append(
                CostEntry(
                    cell=int(row["cell"]),
                    repeat=int(row["repeat"]),
                    compression_ratio=float(row["compression_ratio"] or 1.0),
                    f=int(row["f"] or 0),
                    status=row["status"],
                    rounds_to_tau=opt_int("rounds_to_tau"),
                    bytes_to_tau=opt_int("bytes_to_tau"),
                    final_metric=float(row["final_metric"]) if row.get("final_metric") else math.nan,
                )
            )
    return entries
