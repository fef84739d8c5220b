"""
Input validation utilities for the PhysMotion pipeline.
Each validator returns (is_valid, error_message) so callers decide whether a
failure is fatal; ensure() turns a failed check into an exception.
"""
from typing import Sequence, Tuple, Type

import numpy as np

from exceptions import ValidationError

SI_UNITS = "SI"


def validate_rigid_transform(matrix, tol: float = 1e-6) -> Tuple[bool, str]:
    """
    Validate a 4x4 homogeneous rigid transform.

    Rules:
    - Shape 4x4, finite entries, bottom row (0, 0, 0, 1)
    - Rotation block orthonormal with determinant +1

    Returns:
        (is_valid, error_message)
    """
    m = np.asarray(matrix, dtype=float)
    if m.shape != (4, 4):
        return False, f"Transform must be 4x4, got shape {m.shape}."
    if not np.all(np.isfinite(m)):
        return False, "Transform contains non-finite values."
    if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=tol):
        return False, "Transform bottom row must be (0, 0, 0, 1)."
    rot = m[:3, :3]
    if not np.allclose(rot @ rot.T, np.eye(3), atol=tol):
        return False, "Rotation block is not orthonormal."
    if np.linalg.det(rot) <= 0:
        return False, "Rotation block must have determinant +1."
    return True, ""


def validate_unit_quaternion(quat, tol: float = 1e-9) -> Tuple[bool, str]:
    """Validate an (x, y, z, w) quaternion of unit norm."""
    q = np.asarray(quat, dtype=float)
    if q.shape != (4,):
        return False, f"Quaternion must have 4 components, got shape {q.shape}."
    if abs(np.linalg.norm(q) - 1.0) > tol:
        return False, f"Quaternion norm {np.linalg.norm(q):.12f} is not 1."
    return True, ""


def validate_mass_fractions(fractions: Sequence[float], tol: float = 1e-9) -> Tuple[bool, str]:
    """
    Validate an anatomical mass distribution.

    Rules:
    - Every fraction non-negative
    - Fractions sum to 1 within tol
    """
    f = np.asarray(fractions, dtype=float)
    if f.size == 0:
        return False, "Mass distribution is empty."
    if np.any(f < 0):
        return False, "Mass fractions must be non-negative."
    total = float(f.sum())
    if abs(total - 1.0) > tol:
        return False, f"Mass fractions sum to {total:.12f}, expected 1."
    return True, ""


def validate_inertia(inertia, tol: float = 1e-12) -> Tuple[bool, str]:
    """Validate a 3x3 symmetric positive definite inertia tensor."""
    i = np.asarray(inertia, dtype=float)
    if i.shape != (3, 3):
        return False, f"Inertia must be 3x3, got shape {i.shape}."
    if not np.allclose(i, i.T, atol=max(tol, 1e-12 * np.abs(i).max())):
        return False, "Inertia tensor is not symmetric."
    if np.linalg.eigvalsh(0.5 * (i + i.T)).min() <= 0:
        return False, "Inertia tensor is not positive definite."
    return True, ""


def validate_joint_limits(lower, upper) -> Tuple[bool, str]:
    """Validate per-axis joint limits (lower < upper)."""
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if lo.shape != (3,) or hi.shape != (3,):
        return False, "Joint limits need three axes."
    if np.any(lo >= hi):
        return False, "Joint limit lower bound must be below the upper bound."
    return True, ""


def validate_units(units: str) -> Tuple[bool, str]:
    """Only SI units are accepted in files."""
    if units != SI_UNITS:
        return False, f"Units must be '{SI_UNITS}', got '{units}'."
    return True, ""


def ensure(result: Tuple[bool, str], error: Type[Exception] = ValidationError,
           context: str = "") -> None:
    """Raise `error` when a validator reports failure."""
    ok, message = result
    if not ok:
        raise error(f"{context}: {message}" if context else message)
