"""
Ground plane handlers for the PhysMotion CLI.
Estimates the plane under a kinematic trajectory and refines the trajectory
against it.
"""
import argparse

from handlers.common import add_body_argument, load_body_arg, out_dir, settings_from_args
from motion import io
from services.ground_plane import estimate_plane_from_states
from services.kinematic_refine import refine_trajectory
from utils.logger import logger


def estimate_plane_command(args: argparse.Namespace) -> int:
    """Estimate the ground plane of an observation file."""
    settings = settings_from_args(args)
    model = load_body_arg(args.body, settings)
    obs = io.load_observations(args.observations)
    estimate = estimate_plane_from_states(model, obs.kinematic_poses,
                                          k=settings.config.plane.k, delta=settings.config.plane.delta)
    path = io.save_plane(args.output or out_dir(args) / "plane.json", settings.ground(estimate.plane),
                         estimate.loss, estimate.identifiable, estimate.converged)
    logger.info(f"Ground plane written to {path}")
    return 0


def refine_command(args: argparse.Namespace) -> int:
    """Refine kinematic poses with the temporal and ground terms."""
    settings = settings_from_args(args)
    model = load_body_arg(args.body, settings)
    obs = io.load_observations(args.observations)
    plane = io.load_plane(args.plane)
    result = refine_trajectory(model, obs, plane, settings.refine(),
                               k=settings.config.plane.k, delta=settings.config.plane.delta)
    path = io.save_observations(args.output or out_dir(args) / "refined_observations.json",
                                result.observations)
    logger.info(f"Refined observations written to {path} "
                f"(loss {result.initial_loss:.4f} -> {result.final_loss:.4f})")
    return 0


def setup_plane_handlers(subparsers) -> None:
    """Register the estimate-plane and refine subcommands."""
    parser = subparsers.add_parser("estimate-plane", help="estimate the ground plane")
    parser.add_argument("--observations", required=True, help="observation file")
    add_body_argument(parser)
    parser.add_argument("-o", "--output", help="plane file (default: <out-dir>/plane.json)")
    parser.set_defaults(handler=estimate_plane_command)

    parser = subparsers.add_parser("refine", help="refine kinematic poses against the ground plane")
    parser.add_argument("--observations", required=True, help="observation file")
    parser.add_argument("--plane", required=True, help="plane file")
    add_body_argument(parser)
    parser.add_argument("-o", "--output", help="refined observation file")
    parser.set_defaults(handler=refine_command)
