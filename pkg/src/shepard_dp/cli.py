"""Command line entry point: ``shepard-dp <subcommand> [config.json] [--set key=value ...]``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from shepard_dp.approximation import ConditioningError
from shepard_dp.config import ConfigError, load_config
from shepard_dp.experiments import (
    NumericError,
    run_compare_interpolation,
    run_convergence_study,
    run_residual_map,
    run_simulate,
    run_solve,
)
from shepard_dp.feedback import DeadEndError, NotStabilizableError
from shepard_dp.pgm import PGMParseError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

COMMANDS = {
    "solve": run_solve,
    "simulate": run_simulate,
    "residual-map": run_residual_map,
    "convergence-study": run_convergence_study,
    "compare-interpolation": run_compare_interpolation,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shepard-dp", description="Meshfree value iteration with Shepard approximation.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?", help="JSON run configuration")
        p.add_argument("--set", dest="assignments", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set kernel.sigma=2 (repeatable)")
        p.add_argument("-o", "--output", help="output directory (overrides the config)")
        if name == "simulate":
            p.add_argument("--x0", type=float, nargs="+", help="initial state")
            p.add_argument("--steps", type=int, help="maximum number of closed-loop steps")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    assignments = list(args.assignments)
    if args.output:
        assignments.append(f"output={args.output}")
    if getattr(args, "x0", None):
        assignments.append(f"feedback.x0={list(args.x0)}")
    if getattr(args, "steps", None) is not None:
        assignments.append(f"feedback.steps={args.steps}")
    try:
        cfg = load_config(args.config, assignments)
        with np.errstate(over="ignore", under="ignore"):
            COMMANDS[args.command](cfg)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PGMParseError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, NotStabilizableError, DeadEndError, ConditioningError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
