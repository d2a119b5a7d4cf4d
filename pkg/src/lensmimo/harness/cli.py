"""Command-line entry point for the experiment harness."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, UnknownExperiment, load_config
from .experiments import NumericalError, run_experiment
from .results import rows_to_csv

log = logging.getLogger("lensmimo")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_UNKNOWN_EXPERIMENT = 4
EXIT_OUTPUT = 5


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lensmimo", description="Run a lens MIMO simulation experiment and write CSV rows.")
    p.add_argument("--experiment", required=True, help=f"one of: {', '.join(EXPERIMENTS)}")
    p.add_argument("--config", help="flat YAML file overriding the experiment defaults")
    p.add_argument("--trials", type=int, help="Monte-Carlo trials per sweep point")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", help="output CSV path (stdout if omitted)")
    p.add_argument("--threads", type=int, help="worker threads (default: $LENSMIMO_THREADS or 1)")
    p.add_argument("--theory-only", action="store_true", help="emit closed-form rows only, no Monte Carlo")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        overrides = load_config(args.config) if args.config else {}
        overrides.update({"trials": args.trials, "seed": args.seed, "out": args.out})
        if args.theory_only:
            overrides["theory_only"] = True
        cfg = ExperimentConfig.for_experiment(args.experiment, **overrides)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads must be positive")
    except UnknownExperiment as exc:
        log.error("%s", exc)
        return EXIT_UNKNOWN_EXPERIMENT
    except (ConfigError, TypeError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG

    if cfg.out:
        parent = os.path.dirname(os.path.abspath(cfg.out))
        if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
            log.error("output path %s is not writable", cfg.out)
            return EXIT_OUTPUT

    try:
        rows = run_experiment(cfg, threads=args.threads)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL

    text = rows_to_csv(rows)
    if cfg.out:
        try:
            with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            log.error("cannot write %s: %s", cfg.out, exc)
            return EXIT_OUTPUT
        log.info("wrote %d rows to %s", len(rows), cfg.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
