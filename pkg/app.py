"""
PhysMotion - Main Application Entry Point

Command-line pipeline that reconstructs physically plausible humanoid motion
from noisy kinematic input by simulating a torque-controlled character and
optimizing its control targets with CMA-ES.

Usage:
    python app.py [--seed N] [--config FILE] [--out-dir DIR] [--fast] [--threads N] <subcommand> ...
"""
import argparse
import sys
from typing import List, Optional

from config import DEFAULT_SEED, DEFAULT_THREADS, OUTPUT_DIR
from exceptions import PhysMotionError
from handlers.body import setup_body_handlers
from handlers.evaluate import setup_evaluate_handlers
from handlers.optimize import setup_optimize_handlers
from handlers.pipeline import setup_pipeline_handlers
from handlers.plane import setup_plane_handlers
from handlers.simulate import setup_simulate_handlers
from handlers.synth import setup_synth_handlers
from utils.logger import logger

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_PIPELINE_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    """Global flags followed by one subcommand."""
    parser = argparse.ArgumentParser(prog="physmotion", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help="random seed")
    parser.add_argument("--config", help="run configuration file (JSON)")
    parser.add_argument("--out-dir", default=OUTPUT_DIR, help="output directory")
    parser.add_argument("--fast", action="store_true", help="desk-scale CMA-ES budget (lambda 32, 200 iterations)")
    parser.add_argument("--threads", type=int, default=DEFAULT_THREADS, help="worker processes")

    subparsers = parser.add_subparsers(dest="command", required=True, metavar="<subcommand>")
    setup_body_handlers(subparsers)
    setup_plane_handlers(subparsers)
    setup_optimize_handlers(subparsers)
    setup_simulate_handlers(subparsers)
    setup_evaluate_handlers(subparsers)
    setup_synth_handlers(subparsers)
    setup_pipeline_handlers(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the subcommand and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    logger.info(f"Starting '{args.command}' (seed {args.seed}{', fast' if args.fast else ''})")
    try:
        return args.handler(args)
    except PhysMotionError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_PIPELINE_ERROR
    except KeyboardInterrupt:
        logger.info("Stopped by user")
        return EXIT_UNEXPECTED
    except Exception as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
