"""
Bundled data tables for the PhysMotion pipeline.
Loads the JSON tables under data/ (mass fractions, torque limits, landmarks)
once and serves them from a module cache.
"""
import json
from pathlib import Path
from typing import Any, Dict

from exceptions import ContractError
from utils.logger import logger

# Cache for loaded tables
_tables: Dict[str, Dict[str, Any]] = {}
DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def load_table(name: str) -> Dict[str, Any]:
    """Load data/<name>.json, caching the parsed document."""
    if name in _tables:
        return _tables[name]
    path = DATA_DIR / f"{name}.json"
    try:
        with open(path, "r", encoding="utf-8") as f:
            _tables[name] = json.load(f)
    except FileNotFoundError:
        raise ContractError(f"Bundled data table '{name}' not found at {path}")
    except json.JSONDecodeError as e:
        raise ContractError(f"Bundled data table '{name}' is not valid JSON: {e}")
    logger.debug(f"Loaded data table '{name}' ({_tables[name].get('provenance', 'no provenance')[:60]})")
    return _tables[name]


def mass_fractions() -> Dict[str, float]:
    return dict(load_table("mass_fractions")["fractions"])


def joint_table() -> Dict[str, Dict[str, Any]]:
    return load_table("torque_limits")["joints"]


def default_landmarks() -> list:
    return list(load_table("landmarks")["landmarks"])
