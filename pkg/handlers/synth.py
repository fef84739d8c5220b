"""
Synthetic data handler for the PhysMotion CLI.
Simulates a scripted scene and writes observations, ground truth and a run
configuration that the pipeline subcommand can consume directly.
"""
import argparse

from enums import Scenario
from handlers.common import out_dir
from motion import io
from motion.schemas import RunConfigSchema
from services.synthetic import SYNTH_DURATION, SYNTH_FPS, NoiseConfig, generate_synthetic
from utils.logger import logger


def synth_command(args: argparse.Namespace) -> int:
    """Generate a synthetic scene."""
    noise = NoiseConfig(landmark_px=args.landmark_noise, pose_rad=args.pose_noise)
    scene = generate_synthetic(args.scenario, seed=args.seed, noise=noise,
                               duration=args.duration, fps=args.fps)
    out = out_dir(args)
    io.save_body(out / "body.json", scene.model)
    io.save_observations(out / "observations.json", scene.observations)
    io.save_clip(out / "ground_truth.json", scene.ground_truth)
    io.save_controls(out / "controls.json", scene.controls)
    io.save_plane(out / "plane.json", scene.plane)
    io.save_scene(out / "scene.json", scene.plane)
    io.save_run_config(out / "config.json", RunConfigSchema(
        body="body.json", observations="observations.json",
        ground_truth="ground_truth.json", plane_file="plane.json",
    ))
    logger.info(f"Synthetic '{scene.scenario.value}' scene written to {out}")
    return 0


def setup_synth_handlers(subparsers) -> None:
    """Register the synth subcommand."""
    parser = subparsers.add_parser("synth", help="generate a synthetic scene with ground truth")
    parser.add_argument("scenario", help=f"one of {', '.join(s.value for s in Scenario)}")
    parser.add_argument("--landmark-noise", type=float, default=0.0, help="landmark noise std in px")
    parser.add_argument("--pose-noise", type=float, default=0.0, help="pose noise std in rad")
    parser.add_argument("--duration", type=float, default=SYNTH_DURATION, help="seconds")
    parser.add_argument("--fps", type=float, default=SYNTH_FPS, help="frame rate")
    parser.set_defaults(handler=synth_command)
