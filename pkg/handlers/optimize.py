"""
Optimization handler for the PhysMotion CLI.
Runs windowed CMA-ES trajectory optimization over an observation file.
"""
import argparse
from dataclasses import replace
from typing import Dict

from enums import WindowMode
from handlers.common import add_body_argument, load_body_arg, out_dir, settings_from_args
from motion import io
from services.objectives import ObjectiveWeights
from services.run_log import IterationLog
from services.trajectory_optimizer import optimize_sequence
from utils.logger import logger


def _overrides(args: argparse.Namespace) -> Dict[str, Dict]:
    """Run configuration sections changed by command-line flags."""
    windows = {k: v for k, v in (("length", args.window), ("overlap", args.overlap),
                                  ("mode", args.mode)) if v is not None}
    cma = {k: v for k, v in (("population", args.population), ("iterations", args.iterations),
                              ("sigma0", args.sigma0)) if v is not None}
    return {"windows": windows, "cma": cma}


def optimize_command(args: argparse.Namespace) -> int:
    """Optimize controls window by window and write the joined clip."""
    settings = settings_from_args(args)
    overrides = _overrides(args)
    config = settings.config.model_copy(update={
        "windows": settings.config.windows.model_copy(update=overrides["windows"]),
        "cma": settings.config.cma.model_copy(update=overrides["cma"]),
    })
    settings = replace(settings, config=config)

    model = load_body_arg(args.body, settings)
    obs = io.load_observations(args.observations)
    plane = settings.ground(io.load_plane(args.plane))
    weights = ObjectiveWeights.preset(args.preset) if args.preset else settings.weights()
    prior = io.load_prior(args.prior) if args.prior else settings.prior(model)

    out = out_dir(args)
    log = IterationLog(out / "iterations.jsonl")
    result = optimize_sequence(model, obs, plane, weights, settings.plan(), settings.cma(),
                               settings.sim(plane), prior=prior, iteration_log=log,
                               workers=settings.threads)
    io.save_clip(out / "optimized_clip.json", result.clip)
    for w in result.windows:
        io.save_controls(out / f"controls_window_{w.window.index:02d}.json", w.controls)
    io.write_document(out / "optimize_report.json", result.report())
    failed = sum(1 for w in result.windows if w.failed)
    logger.info(f"Optimized {len(result.clip)} frames in {len(result.windows)} windows "
                f"({failed} failed); artifacts in {out}")
    return 0


def setup_optimize_handlers(subparsers) -> None:
    """Register the optimize subcommand."""
    parser = subparsers.add_parser("optimize", help="optimize control trajectories with CMA-ES")
    parser.add_argument("--observations", required=True, help="observation file (refined or raw)")
    parser.add_argument("--plane", required=True, help="plane file")
    add_body_argument(parser)
    parser.add_argument("--window", type=float, help="window length in s")
    parser.add_argument("--overlap", type=float, help="window overlap in s")
    parser.add_argument("--mode", choices=[m.value for m in WindowMode], help="window scheduling")
    parser.add_argument("--population", type=int, help="CMA-ES population size (lambda)")
    parser.add_argument("--iterations", type=int, help="CMA-ES iterations per window")
    parser.add_argument("--sigma0", type=float, help="initial CMA-ES step size")
    parser.add_argument("--preset", help="weight preset (h36m, aist, humaneva)")
    parser.add_argument("--prior", help="pose prior file")
    parser.set_defaults(handler=optimize_command)
