"""
Body handler for the PhysMotion CLI.
Builds a simulation-ready body model from per-link point sets or the stock
character.
"""
import argparse

from config import DEFAULT_HEIGHT, DEFAULT_TOTAL_MASS
from exceptions import ContractError
from handlers.common import out_dir
from motion import io
from services.body_builder import build_from_documents
from services.stock_character import build_stock_character
from utils.data_tables import mass_fractions
from utils.logger import logger


def build_body_command(args: argparse.Namespace) -> int:
    """Fit primitives to the point sets and assemble the body."""
    if args.stock:
        model = build_stock_character(height=args.height, total_mass=args.total_mass)
    else:
        if not args.points or not args.topology:
            raise ContractError("build-body needs --points and --topology (or --stock)")
        model = build_from_documents(io.load_point_sets(args.points), io.load_topology(args.topology),
                                     args.total_mass, default_fractions=mass_fractions())
    path = io.save_body(args.output or out_dir(args) / "body.json", model)
    logger.info(f"Body model written to {path}")
    return 0


def setup_body_handlers(subparsers) -> None:
    """Register the build-body subcommand."""
    parser = subparsers.add_parser("build-body", help="fit primitives and assemble a body model")
    parser.add_argument("--points", help="per-link surface point sets file")
    parser.add_argument("--topology", help="joint topology file")
    parser.add_argument("--total-mass", type=float, default=DEFAULT_TOTAL_MASS, help="kg")
    parser.add_argument("--stock", action="store_true", help="build the stock humanoid instead")
    parser.add_argument("--height", type=float, default=DEFAULT_HEIGHT, help="stock character height in m")
    parser.add_argument("-o", "--output", help="body model file (default: <out-dir>/body.json)")
    parser.set_defaults(handler=build_body_command)
