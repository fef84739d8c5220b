"""
Evaluation handler for the PhysMotion CLI.
Scores a predicted clip against ground truth with the full metric suite.
"""
import argparse

from config import CONTACT_THRESHOLD_KINEMATIC
from handlers.common import (add_body_argument, add_contact_threshold_argument, load_body_arg,
                             out_dir, settings_from_args)
from motion import io
from services.metrics import evaluate_clips
from utils.logger import logger


def evaluate_command(args: argparse.Namespace) -> int:
    """Print the metric table and write the JSON report."""
    settings = settings_from_args(args)
    model = load_body_arg(args.body, settings)
    pred = io.load_clip(args.prediction)
    gt = io.load_clip(args.ground_truth)
    plane = io.load_plane(args.plane)
    obs = io.load_observations(args.observations) if args.observations else None
    d = args.contact_threshold if args.contact_threshold is not None else CONTACT_THRESHOLD_KINEMATIC

    report = evaluate_clips(pred, gt, model, plane, obs, d)
    print(report.table())
    path = io.write_document(args.output or out_dir(args) / "evaluation.json", report.to_dict())
    logger.info(f"Evaluation report written to {path}")
    return 0


def setup_evaluate_handlers(subparsers) -> None:
    """Register the evaluate subcommand."""
    parser = subparsers.add_parser("evaluate", help="compare a motion clip with ground truth")
    parser.add_argument("--prediction", required=True, help="predicted motion clip file")
    parser.add_argument("--ground-truth", required=True, help="ground-truth motion clip file")
    parser.add_argument("--plane", required=True, help="plane file")
    parser.add_argument("--observations", help="observation file for the 2D error")
    add_body_argument(parser)
    add_contact_threshold_argument(parser)
    parser.add_argument("-o", "--output", help="report file (default: <out-dir>/evaluation.json)")
    parser.set_defaults(handler=evaluate_command)
