"""
Finite-difference stencils for the PhysMotion pipeline.
Shared by the objectives and the metrics so velocities and accelerations are
computed the same way everywhere: central differences inside the sequence,
one-sided differences at the ends.
"""
import numpy as np

from exceptions import ContractError


def velocity(x: np.ndarray, fps: float) -> np.ndarray:
    """
    First derivative along axis 0.

    Interior frames use (x[t+1] - x[t-1]) / 2h, the first frame the forward
    difference and the last frame the backward difference.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2:
        raise ContractError("Velocity needs at least 2 frames")
    h = 1.0 / fps
    v = np.empty_like(x)
    v[1:-1] = (x[2:] - x[:-2]) / (2.0 * h)
    v[0] = (x[1] - x[0]) / h
    v[-1] = (x[-1] - x[-2]) / h
    return v


def acceleration(x: np.ndarray, fps: float) -> np.ndarray:
    """
    Second derivative along axis 0.

    Interior frames use (x[t+1] - 2x[t] + x[t-1]) / h^2; the end frames copy
    their neighbour's value (one-sided stencil of the same order).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 3:
        raise ContractError("Acceleration needs at least 3 frames")
    h = 1.0 / fps
    a = np.empty_like(x)
    a[1:-1] = (x[2:] - 2.0 * x[1:-1] + x[:-2]) / (h * h)
    a[0] = a[1]
    a[-1] = a[-2]
    return a
