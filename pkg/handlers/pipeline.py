"""
Pipeline handler for the PhysMotion CLI.
"""
import argparse

from handlers.common import add_contact_threshold_argument, out_dir, settings_from_args
from services.pipeline import run_pipeline


def pipeline_command(args: argparse.Namespace) -> int:
    """estimate-plane -> refine -> optimize -> evaluate."""
    settings = settings_from_args(args)
    run_pipeline(settings, out_dir(args), skip_plane=args.skip_plane,
                 contact_threshold=args.contact_threshold)
    return 0


def setup_pipeline_handlers(subparsers) -> None:
    """Register the pipeline subcommand."""
    parser = subparsers.add_parser("pipeline", help="run every stage on the configured inputs")
    parser.add_argument("--skip-plane", action="store_true",
                        help="use the configured plane_file instead of estimating the plane")
    add_contact_threshold_argument(parser)
    parser.set_defaults(handler=pipeline_command)
