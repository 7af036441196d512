"""Experiment configuration files.

A config is one JSON document::

    {
      "name": "clean-rate",
      "problem": {"kind": "quadratic", "family": "shifted", "d": 50, "spread_g": 0.0},
      "run": {"algorithm": "rosdhb_global", "n": 10, "f": 0, "T": 1000,
              "compressor": {"kind": "randk", "ratio": 0.1},
              "aggregator": "nnm+cwtm",
              "attack": {"kind": "alie", "z": 1.0}},
      "sweep": {"compressor.ratio": [1.0, 0.5], "problem.spread_g": [0, 1]},
      "repeats": 2,
      "outputs": "out/clean-rate"
    }

Sweep keys are dotted paths into ``run`` (the default) or into ``problem``
when prefixed with ``problem.``. Unknown keys anywhere are errors.
"""

from __future__ import annotations

import copy
import itertools
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from ..aggregation import AggregatorSpec
from ..attacks import AttackSpec
from ..compression import CompressorSpec
from ..errors import ConfigError
from ..simulator import RunConfig

DEFAULT_CAP = 512

RUN_KEYS = {f.name for f in fields(RunConfig)}
COMPRESSOR_KEYS = {"kind", "ratio", "alpha"}
AGGREGATOR_KEYS = {"base", "pre", "f"}
ATTACK_KEYS = {"kind", "z", "scale"}
QUADRATIC_KEYS = {
    "kind", "family", "d", "spread_g", "spread_b", "base_curvature", "condition",
    "center_norm", "noise", "seed",
}
MNIST_KEYS = {"kind", "root", "n_honest", "hidden", "seed"}
SPEC_KEYS = {
    "name", "problem", "run", "sweep", "repeats", "outputs", "target_accuracy", "cap",
    "lr_grid", "tune_T", "tune_clean", "plots",
}


@dataclass
class ExperimentSpec:
    name: str
    problem: dict
    base: dict
    sweep: dict = field(default_factory=dict)
    repeats: int = 1
    outputs: str = "out"
    target_accuracy: Optional[float] = None
    cap: int = DEFAULT_CAP
    lr_grid: Optional[list] = None
    tune_T: Optional[int] = None
    tune_clean: bool = True
    plots: bool = True

    def __post_init__(self):
        _check_keys(self.base, RUN_KEYS, "run")
        kind = self.problem.get("kind", "quadratic")
        _check_keys(self.problem, QUADRATIC_KEYS if kind == "quadratic" else MNIST_KEYS, "problem")
        if kind not in ("quadratic", "mnist"):
            raise ConfigError(f"unknown problem kind {kind!r}")
        for key, values in self.sweep.items():
            _check_path(key)
            if not isinstance(values, list) or not values:
                raise ConfigError(f"sweep values for {key!r} must be a nonempty list")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.size() > self.cap:
            raise ConfigError(
                f"sweep has {self.size()} runs, above the cap of {self.cap}; raise 'cap' to allow it"
            )

    def size(self):
        total = self.repeats
        for values in self.sweep.values():
            total *= len(values)
        return total

    def cells(self):
        """Yield ``(cell_index, overrides, problem_cfg, run_cfg_dict)`` for every sweep point."""
        keys = list(self.sweep)
        for idx, combo in enumerate(itertools.product(*(self.sweep[k] for k in keys))):
            overrides = dict(zip(keys, combo))
            problem = copy.deepcopy(self.problem)
            run = copy.deepcopy(self.base)
            for key, value in overrides.items():
                if key.startswith("problem."):
                    _set_path(problem, key[len("problem."):], value)
                else:
                    _set_path(run, key[len("run."):] if key.startswith("run.") else key, value)
            yield idx, overrides, problem, run


def _check_keys(d, allowed, where):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _check_path(key):
    parts = key.split(".")
    if parts[0] == "problem":
        if len(parts) != 2 or parts[1] not in QUADRATIC_KEYS | MNIST_KEYS:
            raise ConfigError(f"sweep key {key!r} is not a problem field")
        return
    if parts[0] == "run":
        parts = parts[1:]
    if not parts or parts[0] not in RUN_KEYS:
        raise ConfigError(f"sweep key {key!r} is not a RunConfig field")
    nested = {"compressor": COMPRESSOR_KEYS, "aggregator": AGGREGATOR_KEYS, "attack": ATTACK_KEYS}
    if len(parts) == 2 and parts[0] in nested and parts[1] in nested[parts[0]]:
        return
    if len(parts) != 1:
        raise ConfigError(f"sweep key {key!r} is not a RunConfig field")


def _set_path(d, path, value):
    parts = path.split(".")
    for p in parts[:-1]:
        node = d.get(p)
        if isinstance(node, str):
            # shorthand such as "aggregator": "nnm+cwtm" or "attack": "alie"
            node = _aggregator_dict(node) if p == "aggregator" else {"kind": node}
        d[p] = dict(node or {})
        d = d[p]
    d[parts[-1]] = value


def _aggregator_dict(text):
    spec = AggregatorSpec.parse(text, 0)
    return {"base": spec.base, "pre": spec.pre}


def build_run_config(run, problem=None):
    """Turn a ``run`` mapping into a ``RunConfig``.

    ``n`` may be omitted for MNIST problems, where it defaults to
    ``n_honest + f``. The aggregator's ``f`` defaults to the run's ``f``.
    """
    run = dict(run)
    _check_keys(run, RUN_KEYS, "run")
    f = int(run.get("f", 0))
    if run.get("n") is None:
        if problem and problem.get("kind") == "mnist":
            run["n"] = int(problem.get("n_honest", 10)) + f
        else:
            run["n"] = int(problem.get("n", 10)) if problem else 10
    comp = run.get("compressor", {})
    if isinstance(comp, str):
        comp = {"kind": comp}
    _check_keys(comp, COMPRESSOR_KEYS, "compressor")
    run["compressor"] = CompressorSpec(**comp)
    agg = run.get("aggregator", {})
    if isinstance(agg, str):
        agg = _aggregator_dict(agg)
    _check_keys(agg, AGGREGATOR_KEYS, "aggregator")
    agg = dict(agg)
    if agg.get("f") is None:
        agg["f"] = f
    run["aggregator"] = AggregatorSpec(**agg)
    att = run.get("attack", {})
    if isinstance(att, str):
        att = {"kind": att}
    _check_keys(att, ATTACK_KEYS, "attack")
    run["attack"] = AttackSpec(**att)
    return RunConfig(**run)


def load_spec(path, seed=None):
    """Read an experiment config file; ``seed`` overrides ``run.seed``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return spec_from_dict(doc, seed=seed)


def spec_from_dict(doc, seed=None):
    _check_keys(doc, SPEC_KEYS, "config")
    run = dict(doc.get("run", {}))
    if seed is not None:
        run["seed"] = seed
    return ExperimentSpec(
        name=doc.get("name", "experiment"),
        problem=dict(doc.get("problem", {"kind": "quadratic"})),
        base=run,
        sweep=dict(doc.get("sweep", {})),
        repeats=int(doc.get("repeats", 1)),
        outputs=doc.get("outputs", "out"),
        target_accuracy=doc.get("target_accuracy"),
        cap=int(doc.get("cap", DEFAULT_CAP)),
        lr_grid=doc.get("lr_grid"),
        tune_T=doc.get("tune_T"),
        tune_clean=bool(doc.get("tune_clean", True)),
        plots=bool(doc.get("plots", True)),
    )
