"""
Configuration module for the PhysMotion pipeline.
Loads environment variables and provides the published default constants.
"""
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _float_env(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"{name} must be a number, got {raw!r}")


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")


# Logging Configuration
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_DIR = os.getenv("LOG_DIR", "logs")

# Run Configuration
OUTPUT_DIR = os.getenv("OUTPUT_DIR", "runs")
DEFAULT_SEED = _int_env("PHYSMOTION_SEED", 0)
DEFAULT_THREADS = _int_env("PHYSMOTION_THREADS", 1)
if DEFAULT_THREADS < 1:
    raise ValueError("PHYSMOTION_THREADS must be at least 1")

# Simulation Configuration (200 Hz, mu = 0.9, g = 9.8, k_p = 4.0, k_d = 0.3)
SIM_RATE_HZ = _float_env("SIM_RATE_HZ", 200.0)
if SIM_RATE_HZ <= 0:
    raise ValueError("SIM_RATE_HZ must be positive")
GRAVITY = _float_env("GRAVITY", 9.8)
FRICTION = _float_env("FRICTION", 0.9)
KP = _float_env("KP", 4.0)
KD = _float_env("KD", 0.3)
CONTACT_SLOP = 0.002            # m, resting-contact allowance
BAUMGARTE = 0.2                 # fraction of penetration removed per step
CONTACT_MARGIN = 0.02           # m, speculative contact distance
CONTACT_ITERATIONS = 30

# Contact detection thresholds for metrics
CONTACT_THRESHOLD_KINEMATIC = 0.005   # m
CONTACT_THRESHOLD_DYNAMIC = -0.015    # m
CONTACT_MIN_VERTICES = 10
FOOTSKATE_DISTANCE = 0.02             # m per frame
FLOAT_DISTANCE = 0.02                 # m

# Control Spline Configuration
KNOT_INTERVAL = _float_env("KNOT_INTERVAL", 0.2)  # s

# CMA-ES Configuration
CMA_POPULATION = _int_env("CMA_POPULATION", 100)
CMA_ITERATIONS = _int_env("CMA_ITERATIONS", 2000)
CMA_SIGMA0 = _float_env("CMA_SIGMA0", 0.1)        # rad in coefficient space
FAST_POPULATION = 32
FAST_ITERATIONS = 200

# Window Configuration
WINDOW_LENGTH = _float_env("WINDOW_LENGTH", 1.0)    # s
WINDOW_OVERLAP = _float_env("WINDOW_OVERLAP", 0.25)  # s
if not 0 <= WINDOW_OVERLAP < WINDOW_LENGTH:
    raise ValueError("WINDOW_OVERLAP must lie in [0, WINDOW_LENGTH)")

# Ground Plane Configuration (k = 20 smallest distances, clipped at 0.2 m)
PLANE_K = 20
PLANE_DELTA = 0.2
PLANE_STARTS = 8

# Objective Configuration
LIMIT_PENALTY_RATE = 10.0       # 1/rad
BEHIND_CAMERA_PENALTY = 1.0e4   # px per landmark
PRIMITIVE_SURFACE_SAMPLES = 500

# Body Configuration
DEFAULT_TOTAL_MASS = 70.0       # kg
DEFAULT_HEIGHT = 1.75           # m
