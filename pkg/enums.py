"""
Domain enums for the PhysMotion pipeline.
Provides type-safe constants for primitives, clips, control and scheduling.
"""
from enum import Enum


class PrimitiveKind(str, Enum):
    """Geometric primitive approximating a body segment."""
    CAPSULE = "capsule"
    BOX = "box"


class ClipSource(str, Enum):
    """Where a motion clip came from - selects the contact threshold."""
    KINEMATIC = "kinematic"
    SIMULATED = "simulated"


class PDMode(str, Enum):
    """How PD torques enter the integrator."""
    STABLE = "stable"        # torques evaluated at the end-of-step state
    EXPLICIT = "explicit"    # torques evaluated at the start-of-step state


class WindowMode(str, Enum):
    """Temporal window scheduling for trajectory optimization."""
    SEQUENTIAL = "sequential"
    PARALLEL_JOIN = "parallel-join"


class Scenario(str, Enum):
    """Scripted synthetic scenes."""
    STAND = "stand"
    SQUAT = "squat"
    WALK_CYCLE = "walk-cycle"
    DROP = "drop"


class Stage(str, Enum):
    """Pipeline stages - executed in declaration order."""
    ESTIMATE_PLANE = "estimate-plane"
    REFINE = "refine"
    OPTIMIZE = "optimize"
    EVALUATE = "evaluate"
