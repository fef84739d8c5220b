"""
Exception hierarchy for the PhysMotion pipeline.
Every error raised on purpose derives from PhysMotionError so the CLI can
tell expected failures from bugs.
"""
from typing import Any, Dict, Optional


class PhysMotionError(Exception):
    """Base class for all expected pipeline errors."""


class ContractError(PhysMotionError, ValueError):
    """Inputs violate an operation's preconditions (shape, range, count)."""


class ValidationError(ContractError):
    """A value object violates one of its invariants."""


class SchemaError(ValidationError):
    """A file does not match its documented schema."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class StructureError(ValidationError):
    """The joint graph is not a tree rooted at the base link."""


class IllPosedError(PhysMotionError):
    """A fit has no unique solution (coplanar points, rank deficiency)."""


class SimulationDivergedError(PhysMotionError):
    """The integrator produced NaN or Inf."""

    def __init__(self, step: int, time: Optional[float] = None):
        self.step = step
        self.time = time
        where = f"step {step}" if time is None else f"step {step} (t={time:.4f} s)"
        super().__init__(f"Simulation diverged at {where}")


class OptimizationFailedError(PhysMotionError):
    """Every candidate of an optimization diverged."""

    def __init__(self, message: str, window: Optional[int] = None,
                 diagnostics: Optional[Dict[str, Any]] = None):
        self.window = window
        self.diagnostics = diagnostics or {}
        if window is not None:
            message = f"window {window}: {message}"
        super().__init__(message)


class StageOrderError(PhysMotionError):
    """A pipeline stage was requested before its inputs exist."""
