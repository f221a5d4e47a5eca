"""Experiment command line.

Subcommands::

    steinfilter run   --config cfg.json --out results/ [--seed N] [--threads K]
    steinfilter sweep --config cfg.json --axis dimension --values 4,8,12 --out results/
    steinfilter check --suite gradients

Exit codes: 0 success, 1 invalid config, 2 runtime failure, 3 check-suite
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .checks import SUITES, run_suite
from .runner import ScenarioConfig, run_scenario, sweep


def _load_config(path, seed_override):
    cfg = ScenarioConfig.from_json_file(path)
    if seed_override is not None:
        cfg = dataclasses.replace(cfg, seed=int(seed_override))
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="steinfilter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=1)

    p_sweep = sub.add_parser("sweep", help="run a scenario across an axis")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", required=True, choices=["dimension", "particle-count"])
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--threads", type=int, default=1)

    p_check = sub.add_parser("check", help="run a property suite")
    p_check.add_argument("--suite", required=True, choices=list(SUITES))

    args = parser.parse_args(argv)

    if args.command == "check":
        try:
            results = run_suite(args.suite)
        except Exception as exc:  # pragma: no cover - defensive
            print(f"error: {exc}", file=sys.stderr)
            return 2
        ok = True
        for r in results:
            status = "PASS" if r["passed"] else "FAIL"
            print(f"[{status}] {args.suite}: {r['name']} -- {r['detail']}")
            ok = ok and r["passed"]
        return 0 if ok else 3

    try:
        cfg = _load_config(args.config, args.seed)
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "run":
            summary = run_scenario(cfg, out_dir=args.out, threads=args.threads)
            for name, entry in summary["filters"].items():
                rmse = entry["rmse_mean"]
                rmse_txt = "n/a" if rmse is None else f"{rmse:.4f}"
                print(f"{name}: rmse {rmse_txt}  failures {entry['failures']}")
            print(f"wrote rows.csv, summary.json, plot.csv to {args.out}")
        else:
            values = [v for v in args.values.split(",") if v != ""]
            values = [int(v) for v in values]
            table = sweep(cfg, args.axis, values, out_dir=args.out, threads=args.threads)
            for row in table:
                rmse = row["rmse_mean"]
                rmse_txt = "n/a" if rmse is None else f"{rmse:.4f}"
                print(f"{args.axis}={row['axis_value']} {row['filter']}: rmse {rmse_txt}")
            print(f"wrote sweep.csv to {args.out}")
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
