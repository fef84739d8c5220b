"""
Simulation handler for the PhysMotion CLI.
Rolls a control file out on a body model inside a scene.
"""
import argparse

from handlers.common import add_body_argument, load_body_arg, out_dir, settings_from_args
from motion import io
from motion.models import GroundPlane, SimState
from services.clips import kinematic_state
from services.simulator import simulate
from services.stock_character import stance_height
from utils.logger import logger


def simulate_command(args: argparse.Namespace) -> int:
    """Forward-simulate controls and write the motion clip."""
    settings = settings_from_args(args)
    model = load_body_arg(args.body, settings)
    controls = io.load_controls(args.controls)
    plane, boxes = io.load_scene(args.scene) if args.scene else (GroundPlane(), [])

    if args.start_from:
        s0 = kinematic_state(io.load_observations(args.start_from), 0)
    else:
        height = args.base_height if args.base_height is not None else stance_height()
        s0 = SimState.rest(model, (0.0, height, 0.0))

    duration = args.duration or controls.duration
    clip = simulate(model, s0, controls, duration, settings.sim(plane, boxes), fps=args.fps,
                    time_offset=controls.start_time)
    path = io.save_clip(args.output or out_dir(args) / "simulated_clip.json", clip)
    logger.info(f"Simulated {duration:g} s ({len(clip)} frames) into {path}")
    return 0


def setup_simulate_handlers(subparsers) -> None:
    """Register the simulate subcommand."""
    parser = subparsers.add_parser("simulate", help="forward-simulate a control file")
    add_body_argument(parser)
    parser.add_argument("--controls", required=True, help="control trajectory file")
    parser.add_argument("--scene", help="scene file (default: the plane y = 0)")
    start = parser.add_mutually_exclusive_group()
    start.add_argument("--base-height", type=float, help="start from the rest pose at this base height in m")
    start.add_argument("--start-from", help="start from the first kinematic pose of an observation file")
    parser.add_argument("--duration", type=float, help="seconds to simulate (default: the controls' duration)")
    parser.add_argument("--fps", type=float, default=30.0, help="recorded frame rate")
    parser.add_argument("-o", "--output", help="motion clip file")
    parser.set_defaults(handler=simulate_command)
