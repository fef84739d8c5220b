"""
Control-target splines for the PhysMotion pipeline.
Cubic B-splines with clamped uniform knots; the coefficients are the decision
variables of trajectory optimization.
"""
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from exceptions import ContractError, IllPosedError
from utils.logger import logger

DEGREE = 3
TIME_EPS = 1e-9


def span_count(duration: float, knot_interval: float) -> int:
    """Number of knot spans: floor(duration / knot_interval), at least one."""
    return max(1, int(math.floor(duration / knot_interval + TIME_EPS)))


def clamped_knots(duration: float, spans: int) -> np.ndarray:
    """Clamped uniform knot vector on [0, duration]."""
    interior = np.linspace(0.0, duration, spans + 1)
    return np.concatenate([np.zeros(DEGREE), interior, np.full(DEGREE, duration)])


def find_span(knots: np.ndarray, n_basis: int, t: float) -> int:
    """Index i with knots[i] <= t < knots[i + 1]; the last span is closed."""
    if t >= knots[n_basis]:
        return n_basis - 1
    return int(np.searchsorted(knots, t, side="right") - 1)


def basis_functions(knots: np.ndarray, span: int, t: float) -> np.ndarray:
    """The DEGREE + 1 non-zero basis values at t (Cox-de Boor triangle)."""
    values = np.zeros(DEGREE + 1)
    left = np.zeros(DEGREE + 1)
    right = np.zeros(DEGREE + 1)
    values[0] = 1.0
    for j in range(1, DEGREE + 1):
        left[j] = t - knots[span + 1 - j]
        right[j] = knots[span + j] - t
        saved = 0.0
        for r in range(j):
            temp = values[r] / (right[r + 1] + left[j - r])
            values[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        values[j] = saved
    return values


def basis_matrix(knots: np.ndarray, n_basis: int, times: np.ndarray) -> np.ndarray:
    """(len(times), n_basis) collocation matrix."""
    out = np.zeros((len(times), n_basis))
    for row, t in enumerate(times):
        span = find_span(knots, n_basis, t)
        out[row, span - DEGREE:span + 1] = basis_functions(knots, span, t)
    return out


@dataclass(frozen=True, eq=False)
class ControlTrajectory:
    """
    Per-DOF control targets q_hat(t) for t in [0, duration].

    coefficients has shape (n_basis, dof) with n_basis = spans + 3.
    start_time places the window on the observation clock and does not
    affect evaluation.
    """
    knot_interval: float
    duration: float
    coefficients: np.ndarray
    start_time: float = 0.0
    residual_rms: Optional[float] = None

    def __post_init__(self):
        if not self.knot_interval > 0 or not self.duration > 0:
            raise ContractError("knot_interval and duration must be positive")
        coeffs = np.array(self.coefficients, dtype=float, copy=True)
        if coeffs.ndim != 2:
            raise ContractError(f"coefficients must be a matrix, got shape {coeffs.shape}")
        if coeffs.shape[0] != self.n_basis:
            raise ContractError(f"Expected {self.n_basis} basis rows for duration {self.duration} "
                                f"and knot interval {self.knot_interval}, got {coeffs.shape[0]}")
        if not np.all(np.isfinite(coeffs)):
            raise ContractError("coefficients must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def spans(self) -> int:
        return span_count(self.duration, self.knot_interval)

    @property
    def n_basis(self) -> int:
        return self.spans + DEGREE

    @property
    def dof_count(self) -> int:
        return self.coefficients.shape[1]

    @cached_property
    def knots(self) -> np.ndarray:
        return clamped_knots(self.duration, self.spans)

    @property
    def parameter_count(self) -> int:
        return self.coefficients.size

    def at(self, t: float) -> np.ndarray:
        """Target at local time t; see evaluate()."""
        return evaluate(self, t)

    def with_coefficients(self, coefficients: np.ndarray) -> "ControlTrajectory":
        return replace(self, coefficients=coefficients, residual_rms=None)

    @classmethod
    def constant(cls, pose: np.ndarray, duration: float, knot_interval: float,
                 start_time: float = 0.0) -> "ControlTrajectory":
        """Spline holding a single target pose."""
        n_basis = span_count(duration, knot_interval) + DEGREE
        coeffs = np.tile(np.asarray(pose, dtype=float), (n_basis, 1))
        return cls(knot_interval, duration, coeffs, start_time)


def _check_time(traj: ControlTrajectory, t: float) -> float:
    if not -TIME_EPS <= t <= traj.duration + TIME_EPS:
        raise ContractError(f"t={t} outside [0, {traj.duration}]")
    return min(max(float(t), 0.0), traj.duration)


def evaluate(traj: ControlTrajectory, t: float) -> np.ndarray:
    """
    Control target at local time t by de Boor's algorithm.

    Raises:
        ContractError: t outside [0, duration]
    """
    t = _check_time(traj, t)
    knots = traj.knots
    span = find_span(knots, traj.n_basis, t)
    d = traj.coefficients[span - DEGREE:span + 1].copy()
    for r in range(1, DEGREE + 1):
        for j in range(DEGREE, r - 1, -1):
            i = span - DEGREE + j
            denom = knots[i + DEGREE + 1 - r] - knots[i]
            alpha = 0.0 if denom == 0 else (t - knots[i]) / denom
            d[j] = (1.0 - alpha) * d[j - 1] + alpha * d[j]
    return d[DEGREE]


def evaluate_many(traj: ControlTrajectory, times: np.ndarray) -> np.ndarray:
    """(len(times), dof) targets; same values as evaluate() per time."""
    times = np.array([_check_time(traj, t) for t in np.atleast_1d(times)])
    return basis_matrix(traj.knots, traj.n_basis, times) @ traj.coefficients


def fit_to_samples(samples: np.ndarray, fps: float, knot_interval: float,
                   start_time: float = 0.0) -> ControlTrajectory:
    """
    Least-squares spline through per-frame joint angles sampled at fps.

    Raises:
        ContractError: fewer than 4 samples
        IllPosedError: too few samples per knot span for a unique fit
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] < DEGREE + 1:
        raise ContractError(f"Need at least {DEGREE + 1} samples, got {samples.shape[0]}")
    if not fps > 0:
        raise ContractError("fps must be positive")
    duration = (samples.shape[0] - 1) / fps
    spans = span_count(duration, knot_interval)
    n_basis = spans + DEGREE
    knots = clamped_knots(duration, spans)
    times = np.arange(samples.shape[0]) / fps
    design = basis_matrix(knots, n_basis, np.minimum(times, duration))
    if np.linalg.matrix_rank(design) < n_basis:
        raise IllPosedError(f"{samples.shape[0]} samples cannot determine {n_basis} basis "
                            f"coefficients at knot interval {knot_interval} s")
    coeffs, _, _, _ = np.linalg.lstsq(design, samples, rcond=None)
    rms = float(np.sqrt(np.mean((design @ coeffs - samples) ** 2)))
    logger.debug(f"Spline fit: {n_basis} basis x {samples.shape[1]} DOF, residual RMS {rms:.3e}")
    return ControlTrajectory(knot_interval, duration, coeffs, start_time, residual_rms=rms)


def flatten(traj: ControlTrajectory) -> np.ndarray:
    """Row-major parameter vector (basis index major, DOF minor)."""
    return traj.coefficients.ravel().copy()


def unflatten(template: ControlTrajectory, vector: np.ndarray) -> ControlTrajectory:
    """
    Inverse of flatten for trajectories shaped like `template`.

    Raises:
        ContractError: wrong vector length
    """
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (template.parameter_count,):
        raise ContractError(f"Expected {template.parameter_count} parameters, got shape {vector.shape}")
    return template.with_coefficients(vector.reshape(template.coefficients.shape))


def affected_interval(traj: ControlTrajectory, basis_index: int) -> Tuple[float, float]:
    """Support of one basis function (at most DEGREE + 1 knot spans)."""
    knots = traj.knots
    return float(knots[basis_index]), float(knots[basis_index + DEGREE + 1])
