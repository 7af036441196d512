import json
import math

import numpy as np
import pytest

from rosdhb.errors import ConfigError, RosdhbError
from rosdhb.harness import (
    CostEntry,
    CostReport,
    build_run_config,
    cost_curve,
    fit_rate,
    read_records_csv,
    running_mean,
    run_experiment,
    spec_from_dict,
    tail_plateau,
)
from rosdhb.harness.analysis import rounds_and_bytes_to_tau
from rosdhb.harness.experiment import read_summary
from rosdhb.simulator import RoundRecord

SMALL = {
    "name": "small",
    "problem": {"kind": "quadratic", "family": "shifted", "d": 8, "spread_g": 1.0},
    "run": {
        "algorithm": "rosdhb_global", "n": 7, "f": 2, "T": 60, "gamma": 0.05,
        "compressor": {"kind": "randk", "ratio": 0.5}, "aggregator": "nnm+cwtm", "attack": "alie",
    },
    "sweep": {"compressor.ratio": [1.0, 0.25], "problem.spread_g": [0.0, 2.0]},
}


def test_fit_rate_exact_power_law():
    t = np.arange(1, 10001, dtype=np.float64)
    fit = fit_rate(3.0 * t ** -0.5, running=False)
    assert abs(fit.slope + 0.5) < 1e-12 and abs(fit.intercept - math.log(3.0)) < 1e-9
    assert fit.r2 > 0.999999


def test_fit_rate_floor_subtraction():
    t = np.arange(1, 20001, dtype=np.float64)
    y = 2.0 / t + 1e-3
    y[-2000:] = 1e-3  # exact plateau over the tail
    fit = fit_rate(y, (10, 5000), floor=True, running=False)
    assert abs(fit.floor - 1e-3) < 1e-15
    assert abs(fit.slope + 1.0) < 1e-9


def test_fit_rate_running_mean_of_summable_sequence():
    t = np.arange(1, 100001, dtype=np.float64)
    fit = fit_rate(0.5 ** t, (1000, 100000))
    assert abs(fit.slope + 1.0) < 1e-9


def test_fit_rate_errors():
    with pytest.raises(RosdhbError):
        fit_rate(np.ones(5), (3, 2))
    with pytest.raises(RosdhbError):
        fit_rate(np.zeros(100), running=False)


def test_running_mean_skips_nan():
    np.testing.assert_allclose(running_mean([2.0, np.nan, 4.0]), [2.0, 2.0, 3.0])
    assert tail_plateau(np.r_[np.ones(95), 3 * np.ones(5)]) == 3.0


def _rec(t, acc, b=10):
    return RoundRecord(t, 0.0, 0.0, 0.0, 0.0, 0.0, None, b, acc)


def test_rounds_and_bytes_to_tau():
    recs = [_rec(1, None), _rec(2, 0.5), _rec(3, None), _rec(4, 0.9)]
    assert rounds_and_bytes_to_tau(recs, 0.85) == (4, 40)
    assert rounds_and_bytes_to_tau(recs, 0.95) == (None, None)


def test_cost_curve_savings():
    rep = CostReport([
        CostEntry(0, 0, 1.0, 9, "ok", 100, 1000, 0.9),
        CostEntry(0, 1, 1.0, 9, "ok", 100, 3000, 0.9),
        CostEntry(1, 0, 0.01, 9, "ok", 900, 90, 0.9),
        CostEntry(2, 0, 0.1, 9, "failed", None, None, math.nan),
    ])
    rows = cost_curve(rep)
    assert [r["compression_ratio"] for r in rows] == [0.01, 1.0]
    assert rows[1]["bytes_to_tau"] == 2000 and rows[1]["savings"] == 0.0
    assert rows[0]["savings"] == 1 - 90 / 2000


def test_cost_curve_without_baseline_warns(caplog):
    rows = cost_curve([CostEntry(0, 0, 0.1, 0, "ok", 5, 50, 0.9), CostEntry(1, 0, 0.2, 0, "ok", 5, 60, 0.9)])
    assert all("savings" not in r for r in rows)
    assert "baseline" in caplog.text


def test_spec_validation():
    with pytest.raises(ConfigError):
        spec_from_dict(dict(SMALL, bogus=1))
    with pytest.raises(ConfigError):
        spec_from_dict(dict(SMALL, sweep={"compressor.level": [1]}))
    with pytest.raises(ConfigError):
        spec_from_dict(dict(SMALL, sweep={"gamma": list(range(600))}))
    spec = spec_from_dict(dict(SMALL, sweep={"gamma": list(range(600))}, cap=1000))
    assert spec.size() == 600


def test_cells_apply_overrides():
    spec = spec_from_dict(SMALL, seed=5)
    cells = list(spec.cells())
    assert len(cells) == 4
    _, over, problem, run = cells[3]
    assert over == {"compressor.ratio": 0.25, "problem.spread_g": 2.0}
    assert problem["spread_g"] == 2.0 and run["compressor"]["ratio"] == 0.25 and run["seed"] == 5


def test_shorthand_sweeps():
    spec = spec_from_dict({
        "problem": {"kind": "quadratic", "d": 4},
        "run": {"n": 5, "f": 1, "aggregator": "nnm+cwtm", "attack": "alie"},
        "sweep": {"aggregator.base": ["geomed"], "attack.z": [2.0]},
    })
    _, _, problem, run = next(spec.cells())
    cfg = build_run_config(run, problem)
    assert cfg.aggregator.label == "nnm+geomed" and cfg.aggregator.f == 1
    assert cfg.attack.kind == "alie" and cfg.attack.z == 2.0


def test_experiment_outputs_are_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        spec = spec_from_dict(dict(SMALL, outputs=str(tmp_path / name)))
        report = run_experiment(spec)
        assert len(report.successful()) == 4
        outs.append(tmp_path / name)
    files = sorted(p.name for p in outs[0].iterdir())
    assert "summary.csv" in files and "trajectories.png" in files and "cell003_rep00.csv" in files
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_records_csv_roundtrip(tmp_path):
    spec = spec_from_dict(dict(SMALL, sweep={}, outputs=str(tmp_path), plots=False))
    run_experiment(spec)
    recs = read_records_csv(tmp_path / "cell000_rep00.csv")
    assert len(recs) == 60 and recs[0].t == 1 and recs[-1].bytes_up == 7 * 8 * 4
    assert all(r.xi_bound_ok for r in recs)
    summary = read_summary(tmp_path / "summary.csv")
    assert summary[0].status == "ok" and summary[0].compression_ratio == 0.5


def test_failed_cells_do_not_stop_the_sweep(tmp_path):
    doc = dict(SMALL, sweep={"run.gamma": [0.05, 500.0]}, outputs=str(tmp_path), plots=False)
    report = run_experiment(spec_from_dict(doc))
    assert [e.status for e in report.entries] == ["ok", "failed"]
    text = (tmp_path / "summary.csv").read_text()
    assert "diverged" in text


def test_tuned_learning_rate_is_used(tmp_path):
    doc = dict(SMALL, sweep={}, outputs=str(tmp_path), plots=False, lr_grid=[0.001, 0.05], tune_T=40)
    run_experiment(spec_from_dict(doc))
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    header = summary[0].split(",")
    assert float(summary[1].split(",")[header.index("gamma")]) == 0.05


def test_clean_tuning_keeps_the_honest_workers():
    from rosdhb.harness.experiment import _honest_view, build_objective

    problem = {"kind": "quadratic", "d": 6, "spread_g": 1.0}
    cfg = build_run_config({"n": 7, "f": 2, "aggregator": "nnm+cwtm"}, problem)
    obj = build_objective(problem, cfg)
    view = _honest_view(obj)
    assert view.num_workers == 5 and list(view.honest) == list(range(5))
    theta = np.linspace(-1, 1, 6)
    np.testing.assert_array_equal(view.honest_avg_gradient(theta), obj.honest_avg_gradient(theta))
