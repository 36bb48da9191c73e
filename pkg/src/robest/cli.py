"""Command-line front end for the Monte-Carlo harness.

Subcommands map to scenario families: ``deviate`` runs the univariate or
multivariate deviation scenarios, ``regress`` the regression scenario,
``density`` the density scenario, and ``descend`` the descent trace. Flags
override the corresponding config fields. Exit codes: 0 success, 2 config
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .core import InvalidArgumentError
from .harness import ExperimentConfig, compare_estimators, emit_report, run_experiment

_SUBCOMMAND_SCENARIOS = {
    "deviate": ("univariate-deviation", "multivariate-deviation"),
    "regress": ("regression",),
    "density": ("density",),
    "descend": ("descent-trace",),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robest", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, scenarios in _SUBCOMMAND_SCENARIOS.items():
        p = sub.add_parser(name, help=f"run a {' / '.join(scenarios)} experiment")
        p.add_argument("--config", required=True, help="path to a JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--trials", type=int, default=None, help="override trial count")
        p.add_argument("--out", default=None, help="override output path")
        p.add_argument("--format", default=None, choices=("csv", "json-lines"),
                       help="override output format")
        p.add_argument("--workers", type=int, default=None, help="override worker count")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 3
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2

    try:
        config = ExperimentConfig.from_dict(raw)
        allowed = _SUBCOMMAND_SCENARIOS[args.command]
        if config.scenario not in allowed:
            raise InvalidArgumentError(
                f"scenario {config.scenario!r} does not belong to subcommand {args.command!r}"
            )
        overrides = {}
        if args.seed is not None:
            overrides["master_seed"] = args.seed
        if args.trials is not None:
            overrides["trials"] = args.trials
        if args.out is not None:
            overrides["output_path"] = args.out
        if args.format is not None:
            overrides["output_format"] = args.format
        if args.workers is not None:
            overrides["workers"] = args.workers
        if overrides:
            config = replace(config, **overrides)
    except (InvalidArgumentError, TypeError, ValueError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2

    report = run_experiment(config)
    summary = compare_estimators(report)
    for est in report.estimators:
        quantiles = ", ".join(f"q{q:g}={v:.6g}" for q, v in sorted(est.quantiles.items()))
        print(f"{est.name}: {quantiles}, failures={est.failures}")
    if summary["rankings"]:
        top_q = max(summary["rankings"])
        print(f"ranking at q{top_q:g}: {' < '.join(summary['rankings'][top_q])}")

    if config.output_path:
        try:
            emit_report(report, config.output_path, config.output_format)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        print(f"wrote {config.output_format} report to {config.output_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
