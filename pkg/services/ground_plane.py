"""
Ground-plane estimation for the PhysMotion pipeline.
Fits the plane a kinematic motion stands on by pulling the lowest foot and
body surface points onto it, with a multi-start Nelder-Mead search over the
plane normal and offset.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize

from config import PLANE_DELTA, PLANE_K, PLANE_STARTS
from exceptions import ContractError
from motion.kinematics import LinkPoses, link_poses
from motion.models import BodyModel, GroundPlane, SimState
from services.body_builder import sample_surface
from utils.logger import logger
from utils.rotations import exp_map_to_matrix

FOOT_SAMPLES = 120                 # surface samples per foot link
BODY_SAMPLES_PER_PRIMITIVE = 40
START_TILT = np.deg2rad(10.0)
BODY_WEIGHT = 2.0


def _transform(plane: Union[GroundPlane, np.ndarray]) -> np.ndarray:
    return plane.transform if isinstance(plane, GroundPlane) else np.asarray(plane, dtype=float)


def signed_distances(plane: Union[GroundPlane, np.ndarray], points: np.ndarray) -> np.ndarray:
    """y component of T_g applied to the points (positive above the plane)."""
    t = _transform(plane)
    pts = np.asarray(points, dtype=float)
    return pts @ t[1, :3] + t[1, 3]


def plane_loss(plane: Union[GroundPlane, np.ndarray], trajectory: Sequence[np.ndarray],
               k: int = PLANE_K, delta: float = PLANE_DELTA) -> float:
    """
    Sum over frames of ||min(delta, k smallest signed distances)||_2.

    Raises:
        ContractError: a frame has fewer than k points
    """
    t = _transform(plane)
    total = 0.0
    for i, points in enumerate(trajectory):
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        if points.shape[0] < k:
            raise ContractError(f"Frame {i} has {points.shape[0]} points, need at least k={k}")
        d = signed_distances(t, points)
        smallest = np.partition(d, k - 1)[:k]
        total += float(np.linalg.norm(np.minimum(delta, smallest)))
    return total


# ==================== Surface samples ====================

@dataclass(frozen=True, eq=False)
class BodySurface:
    """Link-frame surface samples that follow the character through a motion."""
    links: np.ndarray     # (P,)
    points: np.ndarray    # (P, 3) link frame

    @classmethod
    def of_links(cls, model: BodyModel, links: Sequence[int], samples: int) -> "BodySurface":
        idx, pts = [], []
        for p in model.primitives:
            if p.link in links:
                local = sample_surface(p.kind, p.size, n=samples) @ p.rotation.T + p.center
                pts.append(local)
                idx.append(np.full(len(local), p.link))
        if not pts:
            raise ContractError("No primitives on the requested links")
        return cls(np.concatenate(idx).astype(int), np.concatenate(pts))

    def world(self, poses: LinkPoses) -> np.ndarray:
        return np.einsum("pij,pj->pi", poses.rotations[self.links], self.points) + poses.positions[self.links]


@dataclass(frozen=True, eq=False)
class PlanePointSets:
    """Per-frame world points of the left foot, the right foot and the whole body."""
    left: List[np.ndarray]
    right: List[np.ndarray]
    body: List[np.ndarray]


def character_surfaces(model: BodyModel, foot_samples: int = FOOT_SAMPLES,
                       body_samples: int = BODY_SAMPLES_PER_PRIMITIVE) -> Tuple[BodySurface, BodySurface, BodySurface]:
    """(left foot, right foot, body) surfaces; foot_links are ordered (left, right)."""
    if len(model.foot_links) != 2:
        raise ContractError("Plane estimation needs exactly two foot links")
    left = BodySurface.of_links(model, [model.foot_links[0]], foot_samples)
    right = BodySurface.of_links(model, [model.foot_links[1]], foot_samples)
    body = BodySurface.of_links(model, range(model.n_links), body_samples)
    return left, right, body


def plane_point_sets(model: BodyModel, states: Sequence[SimState],
                     foot_samples: int = FOOT_SAMPLES,
                     body_samples: int = BODY_SAMPLES_PER_PRIMITIVE) -> PlanePointSets:
    """Sample foot and body surfaces for every state of a kinematic trajectory."""
    surfaces = character_surfaces(model, foot_samples, body_samples)
    out = PlanePointSets([], [], [])
    for state in states:
        poses = link_poses(model, state)
        for target, surface in zip((out.left, out.right, out.body), surfaces):
            target.append(surface.world(poses))
    return out


# ==================== Estimation ====================

@dataclass(frozen=True, eq=False)
class PlaneEstimate:
    """Best plane found plus diagnostics."""
    plane: GroundPlane
    loss: float
    converged: bool
    identifiable: bool
    start_losses: List[float] = field(default_factory=list)


def combined_loss(plane, sets: PlanePointSets, k: int = PLANE_K, delta: float = PLANE_DELTA) -> float:
    """Left foot + right foot + 2 x body."""
    return (plane_loss(plane, sets.left, k, delta) + plane_loss(plane, sets.right, k, delta)
            + BODY_WEIGHT * plane_loss(plane, sets.body, k, delta))


def _normal(reference: np.ndarray, params: np.ndarray) -> np.ndarray:
    """Reference normal tilted by rotation angles about world x and z."""
    return exp_map_to_matrix(np.array([params[0], 0.0, params[1]])) @ reference


def _plane(reference: np.ndarray, x: np.ndarray) -> GroundPlane:
    return GroundPlane.from_normal_offset(_normal(reference, x[:2]), float(x[2]))


def _saturated(plane: GroundPlane, sets: PlanePointSets, k: int, delta: float) -> bool:
    """True when every selected distance sits at the clamp, i.e. the loss is locally flat."""
    for frames in (sets.left, sets.right, sets.body):
        for points in frames:
            d = np.partition(signed_distances(plane, points), k - 1)[:k]
            if np.any(d < delta):
                return False
    return True


def _start_points(reference: np.ndarray, sets: PlanePointSets, starts: int,
                  initial: Optional[GroundPlane]) -> List[np.ndarray]:
    tilts = [np.zeros(2)]
    for i in range(max(starts - 1, 0)):
        azimuth = 2.0 * np.pi * i / (starts - 1)
        tilts.append(START_TILT * np.array([np.cos(azimuth), np.sin(azimuth)]))
    out = []
    for tilt in tilts:
        if initial is not None:
            offset = initial.offset
        else:
            # put the plane under the typical lowest foot point
            n = _normal(reference, tilt)
            lowest = [min(np.min(l @ n), np.min(r @ n)) for l, r in zip(sets.left, sets.right)]
            offset = -float(np.median(lowest))
        out.append(np.array([tilt[0], tilt[1], offset]))
    return out


def estimate_plane(sets: PlanePointSets, k: int = PLANE_K, delta: float = PLANE_DELTA,
                   starts: int = PLANE_STARTS, initial: Optional[GroundPlane] = None,
                   max_iterations: int = 2000) -> PlaneEstimate:
    """
    Minimize left + right + 2 x body plane loss over (normal tilt, offset).

    Without `initial` the starts are the world up vector and `starts - 1`
    tilts of 10 degrees, each with its offset under the lowest foot points;
    with `initial` the search starts from that plane's normal and offset.
    Non-convergence and flat (all-airborne) losses are reported, not raised.
    """
    if not sets.left or not (len(sets.left) == len(sets.right) == len(sets.body)):
        raise ContractError("Point trajectories must be non-empty and of equal length")
    reference = initial.normal.copy() if initial is not None else np.array([0.0, 1.0, 0.0])

    def objective(x):
        return combined_loss(_plane(reference, x), sets, k, delta)

    best_x, best_f, converged = None, np.inf, False
    start_losses = []
    for x0 in _start_points(reference, sets, starts, initial):
        simplex = np.vstack([x0, x0 + np.diag([0.05, 0.05, 0.05])])
        result = minimize(objective, x0, method="Nelder-Mead",
                          options={"initial_simplex": simplex, "xatol": 1e-7, "fatol": 1e-10,
                                   "maxiter": max_iterations, "maxfev": 4 * max_iterations})
        start_losses.append(float(result.fun))
        if result.fun < best_f:
            best_x, best_f, converged = result.x, float(result.fun), bool(result.success)

    plane = _plane(reference, best_x)
    identifiable = not _saturated(plane, sets, k, delta)
    if not converged:
        logger.warning(f"Plane search did not converge; keeping best loss {best_f:.6f}")
    if not identifiable:
        logger.warning("Every frame is clamped at delta: the ground plane is not identifiable")
    logger.info(f"Ground plane normal={np.round(plane.normal, 4).tolist()} "
                f"offset={plane.offset:.4f} loss={best_f:.6f}")
    return PlaneEstimate(plane, best_f, converged, identifiable, start_losses)


def estimate_plane_from_states(model: BodyModel, states: Sequence[SimState], **kwargs) -> PlaneEstimate:
    """Plane of a kinematic trajectory of the character."""
    return estimate_plane(plane_point_sets(model, states), **kwargs)
