"""Command line entry points.

    bilevel run --config cfg.json [--seed 7] [--out results/]
    bilevel fit --trace results/trace.csv --column f_gap --window 10:1000
    bilevel selftest

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure
(partial trace flushed).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from .fitting import fit_rate
from .harness import (
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    ConfigError,
    ExperimentConfig,
    run_experiment,
)
from .selftest import selftest


def _cmd_run(args) -> int:
    try:
        config = ExperimentConfig.from_json(args.config)
        summary = run_experiment(config, args.out, seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if summary.get("numerical_failure"):
        print(f"numerical failure: {summary['numerical_failure']}", file=sys.stderr)
        print(f"partial trace written to {args.out}", file=sys.stderr)
        return EXIT_NUMERICAL
    final = summary["final"]
    print(f"wrote {args.out}: N={summary['N']} f_gap={final['f_gap']} "
          f"counters={final['counters']}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    try:
        lo, hi = (int(part) for part in args.window.split(":"))
    except ValueError:
        print("window must look like LO:HI", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with open(args.trace) as fh:
            rows = list(csv.DictReader(fh))
        if not rows or args.column not in rows[0]:
            print(f"column {args.column!r} not found in {args.trace}", file=sys.stderr)
            return EXIT_CONFIG
        values = [float(r[args.column]) if r[args.column] else float("nan") for r in rows]
        budgets = [int(r["k"]) + 1 for r in rows]
    except (OSError, KeyError, ValueError) as exc:
        print(f"cannot read trace: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        fit = fit_rate(values, (lo, hi), budgets=budgets)
    except ValueError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps({
        "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
        "window": list(fit.window), "n_points": fit.n_points,
        "n_excluded": fit.n_excluded, "semilog_slope": fit.semilog_slope,
        "semilog_r_squared": fit.semilog_r_squared,
        "super_polynomial": fit.super_polynomial,
    }, indent=2))
    return EXIT_OK


def _cmd_selftest(args) -> int:
    return 1 if selftest(verbose=True) else EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bilevel",
                                     description="bilevel optimization benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured experiment")
    p_run.add_argument("--config", required=True, help="path to a JSON experiment config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.set_defaults(fn=_cmd_run)

    p_fit = sub.add_parser("fit", help="fit a convergence slope from a trace CSV")
    p_fit.add_argument("--trace", required=True)
    p_fit.add_argument("--column", default="f_gap")
    p_fit.add_argument("--window", required=True, help="budget window LO:HI")
    p_fit.set_defaults(fn=_cmd_fit)

    p_self = sub.add_parser("selftest", help="run the built-in invariant suite")
    p_self.set_defaults(fn=_cmd_selftest)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
