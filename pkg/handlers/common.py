"""
Shared helpers for the PhysMotion command-line handlers.
Turns the global flags into RunSettings and resolves the usual inputs.
"""
import argparse
from pathlib import Path
from typing import Optional

from config import OUTPUT_DIR
from motion import io
from motion.models import BodyModel
from services.pipeline import RunSettings
from services.stock_character import build_stock_character


def settings_from_args(args: argparse.Namespace) -> RunSettings:
    """Run configuration file merged with the global flags."""
    config = io.load_run_config(args.config)
    base_dir = Path(args.config).resolve().parent if args.config else Path.cwd()
    return RunSettings(config=config, seed=args.seed, fast=args.fast,
                       threads=max(1, args.threads), base_dir=base_dir)


def out_dir(args: argparse.Namespace) -> Path:
    path = Path(args.out_dir or OUTPUT_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_body_arg(path: Optional[str], settings: Optional[RunSettings] = None) -> BodyModel:
    """--body file, else the configured body, else the stock character."""
    if path:
        return io.load_body(path)
    if settings is not None:
        return settings.body()
    return build_stock_character()


def add_body_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--body", help="body model file (default: configured body or the stock character)")


def add_contact_threshold_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--contact-threshold", type=float, default=None,
                        help="foot contact distance d in metres for footskate/float (default 0.005)")
