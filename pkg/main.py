#!/usr/bin/env python3
"""
sapg-eb - Command line entry point
Empirical Bayes estimation of regularisation parameters, MAP reconstruction and diagnostics
"""

import argparse
import asyncio
import logging
import logging.config
import sys
from pathlib import Path
from typing import List, Optional

from config import LOGGING_CONFIG, settings
from core.errors import ArtifactError, ConfigError, DivergenceError, HomogeneityMismatchError
from experiments import commands
from experiments.config import load_config
from utils.helpers import parse_float_list

logger = logging.getLogger(__name__)


def configure_logging():
    Path(settings.LOG_FILE).parent.mkdir(parents=True, exist_ok=True)
    logging.config.dictConfig(LOGGING_CONFIG)


def _theta_list(text: str) -> List[float]:
    try:
        values = parse_float_list(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"invalid theta list '{text}': {e}")
    if any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("theta values must be > 0")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.APP_NAME,
        description="Maximum marginal likelihood estimation of regularisation parameters",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.APP_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="TOML experiment file or preset name")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the file)")
        p.add_argument("--workers", type=int, default=settings.DEFAULT_WORKERS, help="parallel workers")
        p.add_argument("--out", default=None, help="output directory (overrides the file)")
        return p

    common(sub.add_parser("estimate", help="run SAPG and write theta traces and summaries"))
    common(sub.add_parser("map", help="MAP reconstruction at the estimated or given theta")).add_argument(
        "--theta", type=_theta_list, default=None, help="theta value(s), comma separated")
    common(sub.add_parser("sweep", help="MAP error over a theta grid")).add_argument(
        "--theta", type=_theta_list, default=None, help="grid values, comma separated")
    common(sub.add_parser("diagnose", help="convergence diagnostics of an estimate run"))
    common(sub.add_parser("oracle-suite", help="reference checks of the building blocks"), needs_config=False)
    return parser


async def run_command(args: argparse.Namespace) -> int:
    if args.command == "oracle-suite":
        out = Path(args.out or settings.DEFAULT_OUTPUT_DIR) / "oracle"
        seed = settings.DEFAULT_MASTER_SEED if args.seed is None else args.seed
        return await commands.cmd_oracle_suite(out, seed=seed)

    config = load_config(args.config, overrides={"master_seed": args.seed, "output_dir": args.out})
    workers = max(int(args.workers), 1)
    if args.command == "estimate":
        return await commands.cmd_estimate(config, workers=workers)
    if args.command == "map":
        return await commands.cmd_map(config, theta_override=args.theta, workers=workers)
    if args.command == "sweep":
        return await commands.cmd_sweep(config, theta_grid=args.theta, workers=workers)
    return await commands.cmd_diagnose(config, workers=workers)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    logger.info(f"{settings.APP_NAME} v{settings.APP_VERSION}: {args.command}")
    try:
        return asyncio.run(run_command(args))
    except (ConfigError, HomogeneityMismatchError) as e:
        logger.error(f"Configuration error: {e}")
        return commands.EXIT_CONFIG
    except DivergenceError as e:
        logger.error(f"Numerical divergence: {e}")
        return commands.EXIT_DIVERGENCE
    except (ArtifactError, OSError) as e:
        logger.error(f"I/O error: {e}")
        return commands.EXIT_IO
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return 130


if __name__ == "__main__":
    sys.exit(main())
