#!/usr/bin/env python3
"""
Rellich Lab - Main entry point script

Checks the Hardy and Rellich equalities, their proof steps and the
nonexistence of extremisers on explicit test functions.

Usage:
    python rellich_lab.py run --config <config_file.yml> [options]
    python rellich_lab.py emit-rule --dim 5 --degree 6 --out sphere.txt
"""

import argparse
import os
import sys
from contextlib import nullcontext
from datetime import datetime

from dotenv import load_dotenv

from src.laboratory import EXIT_CONFIG, EXIT_PASS, EXIT_RUNTIME, RellichLaboratory
from src.rellich.quadrature import sphere_product_rule
from src.utils.config import load_config
from src.utils.errors import ConfigError, LabError, QuadratureError
from src.utils.logging import setup_logging
from src.utils.output import ReportWriter


def build_parser():
    parser = argparse.ArgumentParser(
        description="Verify the Hardy and Rellich equalities numerically."
    )
    parser.add_argument(
        "--verbose", "-v", action="store_true", help="Enable verbose (DEBUG) logging"
    )
    parser.add_argument(
        "--log-file", help="Path to log file for output (or RELLICH_LAB_LOG_FILE in .env)"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run verification suites")
    run.add_argument("--config", help="Path to YAML configuration file")
    run.add_argument("--dim", type=int, action="append", help="Dimension n (repeatable)")
    run.add_argument("--suite", action="append", help="Suite to run (repeatable)")
    run.add_argument(
        "--field", action="append", help='Field "Family:key=val,..." (repeatable)'
    )
    run.add_argument("--seed", type=int, help="Seed for random points, lemma and Monte Carlo")
    run.add_argument("--format", choices=("text", "json-lines", "csv"), help="Output format")
    run.add_argument("--out", help="Output path (default: stdout)")
    run.add_argument("--sphere-degree", type=int, help="Exactness degree of the sphere rule")
    run.add_argument("--radial-n", type=int, help="Number of radial nodes")
    run.add_argument("--mc-samples", type=int, help="Monte Carlo sample count")
    run.add_argument(
        "--workers", type=int, help="Worker threads (or RELLICH_LAB_WORKERS in .env)"
    )
    run.add_argument(
        "--summary", action="store_true", help="Print summary statistics at the end"
    )

    emit = commands.add_parser("emit-rule", help="Write a sphere product rule table")
    emit.add_argument("--dim", type=int, required=True, help="Dimension n")
    emit.add_argument("--degree", type=int, required=True, help="Exactness degree d")
    emit.add_argument("--out", help="Output path (default: stdout)")
    return parser


def overrides_from_args(args):
    """Config overrides for the flags that were given."""
    overrides = {}
    if args.dim:
        overrides["dimensions"] = args.dim
    if args.suite:
        overrides["suites"] = args.suite
    if args.field:
        overrides["fields"] = args.field
    if args.seed is not None:
        overrides["seed"] = args.seed
    output = {}
    if args.format:
        output["format"] = args.format
    if args.out:
        output["path"] = args.out
    if output:
        overrides["output"] = output
    quadrature = {}
    if args.sphere_degree is not None:
        quadrature["sphere_degree"] = args.sphere_degree
    if args.radial_n is not None:
        quadrature["radial_n"] = args.radial_n
    if args.mc_samples is not None:
        quadrature["mc_samples"] = args.mc_samples
    if args.workers is not None:
        quadrature["workers"] = args.workers
    if quadrature:
        overrides["quadrature"] = quadrature
    return overrides


def _open(path):
    if path:
        return open(path, "w", newline="")
    return nullcontext(sys.stdout)


def run(args, logger):
    config = load_config(args.config, overrides_from_args(args))
    logger.info(f"Dimensions: {list(config.dimensions)}")
    logger.info(f"Suites: {', '.join(config.suites)}")
    logger.info(f"Seed: {config.seed}")

    start_time = datetime.now()
    laboratory = RellichLaboratory(config)
    with _open(config.output_path) as stream:
        exit_code = laboratory.run(ReportWriter(stream, config.output_format))
    duration = datetime.now() - start_time

    # Print summary statistics if requested
    if args.summary:
        logger.info("=" * 60)
        logger.info("SUMMARY STATISTICS")
        logger.info(f"Total execution time: {duration}")
        logger.info(f"Passed checks: {laboratory.stats['passed']}")
        logger.info(f"Failed checks: {laboratory.stats['failed']}")
        logger.info(f"Aborted tasks: {laboratory.stats['errors']}")
        logger.info("-" * 30)
        for suite, stats in laboratory.suite_stats.items():
            logger.info(f"  {suite}: {stats['passed']} passed, {stats['failed']} failed")
        logger.info("=" * 60)

    logger.info(f"Run completed in {duration}")
    return exit_code


def emit_rule(args, logger):
    try:
        rule = sphere_product_rule(args.dim, args.degree)
    except QuadratureError as e:
        raise ConfigError(str(e), field="degree") from e
    with _open(args.out) as stream:
        stream.write(rule.to_text())
    logger.info(
        f"Wrote sphere rule n={rule.n} d={rule.degree} ({rule.count} nodes) "
        f"to {args.out or 'stdout'} [sha256 {rule.fingerprint[:16]}]"
    )
    return EXIT_PASS


def main(argv=None):
    """Main entry point for the script."""
    args = build_parser().parse_args(argv)

    load_dotenv()
    log_file = args.log_file or os.getenv("RELLICH_LAB_LOG_FILE")

    # Set up logging
    logger = setup_logging(verbose=args.verbose, log_file=log_file)
    logger.info(f"Starting Rellich Lab ({args.command})")

    try:
        if args.command == "emit-rule":
            return emit_rule(args, logger)
        workers = os.getenv("RELLICH_LAB_WORKERS")
        if args.workers is None and workers:
            if not workers.strip().isdigit():
                raise ConfigError(
                    f"RELLICH_LAB_WORKERS must be an integer (got {workers!r})", field="workers"
                )
            args.workers = int(workers)
        return run(args, logger)
    except ConfigError as e:
        where = f" [{e.field}]" if e.field else ""
        logger.error(f"Configuration error{where}: {e}")
        return EXIT_CONFIG
    except LabError as e:
        logger.error(f"Runtime error: {e}")
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        logger.warning("Script interrupted by user")
        return 130
    except Exception as e:
        logger.exception(f"Unhandled exception: {str(e)}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
