"""Command line entry point: run experiment configs, list kernels, describe checks.

Exit status: 0 all verdicts pass, 1 some verdict failed, 2 configuration
error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import sys

from .config import describe_check, list_kernels, load_config, run_config
from .errors import ConfigurationError, NumericError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbslab",
        description="Run statistical checks of lattice linear random fields "
        "against their normal and fractional-Brownian-sheet limits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the checks in a config file")
    run.add_argument("--config", required=True, help="path to the JSON experiment config")
    run.add_argument("--out", default=None, help="output directory (overrides config)")
    run.add_argument("--seed", type=int, default=None, help="root seed (overrides config)")
    run.add_argument("--jobs", type=int, default=None, help="worker processes for replicas")
    run.add_argument("--budget-mb", type=int, default=None, help="memory budget cap")

    sub.add_parser("list-kernels", help="print the kernel families and parameter windows")

    desc = sub.add_parser("describe-check", help="print what a check verifies")
    desc.add_argument("name", help="check name")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "list-kernels":
            print(list_kernels())
            return 0
        if args.command == "describe-check":
            print(describe_check(args.name))
            return 0
        cfg = load_config(args.config)
        result = run_config(
            cfg,
            out_dir=args.out,
            seed_override=args.seed,
            jobs_override=args.jobs,
            budget_override=args.budget_mb,
        )
        for label, rep in zip(result.labels, result.reports):
            status = "PASS" if rep.passed else "FAIL"
            print(f"{status} {label} ({rep.check})")
        return 0 if result.all_passed else 1
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
