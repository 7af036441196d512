"""Command-line entry point.

    rosdhb run CONFIG [--seed N]
    rosdhb audit-kappa AGG N F [--trials T] [--dim D]
    rosdhb fit-rate CSV [--window TMIN TMAX] [--floor] [--plot PNG]
    rosdhb cost-curve SUMMARY_CSV [--out CSV]
    rosdhb verify
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .aggregation import AggregatorSpec, KappaAudit, audit_kappa
from .errors import RosdhbError
from .harness import plots
from .harness.analysis import cost_curve, fit_rate
from .harness.config import load_spec
from .harness.experiment import fmt, read_records_csv, read_summary, run_experiment
from .vector import RngStream


def _cmd_run(args):
    spec = load_spec(args.config, seed=args.seed)
    report = run_experiment(spec)
    ok = len(report.successful())
    print(f"{spec.name}: {ok}/{len(report.entries)} runs succeeded; outputs in {spec.outputs}")
    if ok < len(report.entries):
        print("error: some runs failed; see the status and error columns of summary.csv", file=sys.stderr)
        return 1
    return 0


def _cmd_audit(args):
    spec = AggregatorSpec.parse(args.agg, args.f)
    audit = audit_kappa(spec, args.n, args.f, args.dim, args.trials, RngStream(args.seed or 0))
    w = csv.DictWriter(sys.stdout, fieldnames=KappaAudit.CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerow(audit.csv_row())
    return 0


def _cmd_fit(args):
    records = read_records_csv(args.csv)
    fit = fit_rate(records, tuple(args.window) if args.window else None, floor=args.floor)
    print("slope,intercept,r2,t_min,t_max,floor,points")
    print(
        ",".join(
            fmt(v)
            for v in (fit.slope, fit.intercept, fit.r2, *fit.window, fit.floor, fit.points)
        )
    )
    if args.plot:
        plots.plot_rate_fit([r.grad_norm_sq for r in records], fit, args.plot)
    return 0


def _cmd_cost(args):
    rows = cost_curve(read_summary(args.summary))
    out = Path(args.out) if args.out else Path(args.summary).with_name("cost_curve.csv")
    fields = ["compression_ratio", "f", "bytes_to_tau", "reached", "repeats"]
    if any("savings" in r for r in rows):
        fields.append("savings")
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", restval="")
        w.writeheader()
        for r in rows:
            w.writerow({k: fmt(v) for k, v in r.items()})
    plots.plot_cost_curve(rows, out.with_suffix(".png"))
    print(out.read_text(), end="")
    return 0


def _cmd_verify(args):
    from .selfcheck import run_all

    failed = 0
    for name, ok, detail in run_all():
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += not ok
    return 1 if failed else 0


def build_parser():
    p = argparse.ArgumentParser(prog="rosdhb", description=__doc__.split("\n\n")[0])
    p.add_argument("--seed", type=int, default=None, help="override the run seed")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.set_defaults(func=_cmd_run)

    a = sub.add_parser("audit-kappa", help="empirical robustness coefficient of an aggregator")
    a.add_argument("agg", help="mean, cwtm, geomed, nnm+cwtm, nnm+geomed")
    a.add_argument("n", type=int)
    a.add_argument("f", type=int)
    a.add_argument("--trials", type=int, default=1000)
    a.add_argument("--dim", type=int, default=5)
    a.set_defaults(func=_cmd_audit)

    fr = sub.add_parser("fit-rate", help="log-log slope of the running mean of ||grad||^2")
    fr.add_argument("csv")
    fr.add_argument("--window", type=int, nargs=2, metavar=("TMIN", "TMAX"))
    fr.add_argument("--floor", action="store_true", help="subtract the tail plateau first")
    fr.add_argument("--plot", help="write a PNG of the fit")
    fr.set_defaults(func=_cmd_fit)

    c = sub.add_parser("cost-curve", help="bytes-to-threshold per compression ratio")
    c.add_argument("summary")
    c.add_argument("--out")
    c.set_defaults(func=_cmd_cost)

    v = sub.add_parser("verify", help="run the enumeration and oracle self-checks")
    v.set_defaults(func=_cmd_verify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (RosdhbError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
