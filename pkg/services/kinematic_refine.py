"""
Kinematic refinement for the PhysMotion pipeline.
Re-estimates the per-frame kinematic poses before physics: 2D landmark
agreement, temporal consistency and ground contact with the plane held fixed.
"""
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from config import PLANE_DELTA, PLANE_K
from exceptions import ContractError
from motion.kinematics import landmark_positions, link_poses
from motion.models import BodyModel, GroundPlane, ObservationFrame, ObservationSequence, SimState
from services.ground_plane import BODY_WEIGHT, BodySurface, character_surfaces
from services.objectives import loss_2d
from utils.logger import logger
from utils.rotations import exp_map_to_matrix, matrix_to_quat, quat_to_matrix

GRADIENT_STEP = 1e-4     # rad / m
SURFACE_SAMPLES = 20     # per primitive for the temporal term


@dataclass(frozen=True)
class RefineWeights:
    w_2d: float = 1.0
    w_temporal: float = 1.0
    w_ground: float = 1.0
    max_iterations: int = 50

    def __post_init__(self):
        if min(self.w_2d, self.w_temporal, self.w_ground) < 0:
            raise ContractError("Refinement weights must be non-negative")

    @classmethod
    def from_run_config(cls, section) -> "RefineWeights":
        return cls(**section.model_dump())


@dataclass(frozen=True, eq=False)
class RefineResult:
    observations: ObservationSequence
    initial_loss: float
    final_loss: float
    converged: bool
    iterations: int


def loss_temporal(poses: np.ndarray, points: np.ndarray) -> float:
    """Sum over t of ||M_t - M_(t-1)||_2 + ||theta_t - theta_(t-1)||_2."""
    poses = np.asarray(poses, dtype=float)
    points = np.asarray(points, dtype=float)
    if poses.shape[0] != points.shape[0]:
        raise ContractError(f"{poses.shape[0]} poses vs {points.shape[0]} point sets")
    if poses.shape[0] < 2:
        raise ContractError("Temporal consistency needs at least 2 frames")
    n = poses.shape[0]
    point_steps = np.linalg.norm((points[1:] - points[:-1]).reshape(n - 1, -1), axis=1)
    pose_steps = np.linalg.norm((poses[1:] - poses[:-1]).reshape(n - 1, -1), axis=1)
    return float(np.sum(point_steps) + np.sum(pose_steps))


class _RefineProblem:
    """
    Per-frame variables: base translation (3), base rotation increment (3,
    applied on the left of the input orientation) and joint angles.
    """

    def __init__(self, model: BodyModel, obs: ObservationSequence, plane: GroundPlane,
                 weights: RefineWeights, k: int, delta: float):
        ids = model.landmark_ids
        missing = [name for name in obs.landmark_ids if name not in ids]
        if missing:
            raise ContractError(f"Landmarks not attached to the model: {', '.join(missing)}")
        self.model = model
        self.obs = obs
        self.plane = plane
        self.weights = weights
        self.k, self.delta = k, delta
        self.landmark_index = np.array([ids.index(name) for name in obs.landmark_ids], dtype=int)
        self.detections = obs.landmarks()
        self.scores = obs.scores()
        self.base_rotations = [quat_to_matrix(s.base_orientation) for s in obs.kinematic_poses]
        self.left, self.right, _ = character_surfaces(model)
        self.surface = BodySurface.of_links(model, range(model.n_links), SURFACE_SAMPLES)
        self.n_frames = len(obs)
        self.width = 6 + model.dof_count
        self.x0 = np.concatenate([np.concatenate([s.base_position, np.zeros(3), s.q])
                                  for s in obs.kinematic_poses])

    def state(self, t: int, xt: np.ndarray) -> SimState:
        src = self.obs.frames[t].kinematic_pose
        rot = exp_map_to_matrix(xt[3:6]) @ self.base_rotations[t]
        quat = matrix_to_quat(rot)
        if quat[3] < 0:
            quat = -quat
        return src.replace(base_position=xt[:3], base_orientation=quat / np.linalg.norm(quat), q=xt[6:])

    def frame_terms(self, t: int, xt: np.ndarray) -> Tuple[float, np.ndarray]:
        """Weighted 2D + ground loss of frame t, and its temporal surface points."""
        poses = link_poses(self.model, self.state(t, xt))
        value = 0.0
        if self.weights.w_2d > 0 and self.landmark_index.size:
            lm = landmark_positions(self.model, poses)[self.landmark_index]
            value += self.weights.w_2d * loss_2d(lm[None], self.detections[t][None],
                                                 self.scores[t][None], self.obs.camera)
        points = self.surface.world(poses)
        if self.weights.w_ground > 0:
            value += self.weights.w_ground * (
                self._ground(self.left.world(poses)) + self._ground(self.right.world(poses))
                + BODY_WEIGHT * self._ground(points))
        return value, points

    def _ground(self, points: np.ndarray) -> float:
        d = points @ self.plane.normal + self.plane.offset
        k = min(self.k, d.shape[0])
        return float(np.linalg.norm(np.minimum(self.delta, np.partition(d, k - 1)[:k])))

    def _temporal(self, xa, pa, xb, pb) -> float:
        return self.weights.w_temporal * (float(np.linalg.norm(pb - pa)) + float(np.linalg.norm(xb[6:] - xa[6:])))

    def split(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(self.n_frames, self.width)

    def evaluate(self, x: np.ndarray) -> Tuple[float, List[float], List[np.ndarray]]:
        xs = self.split(x)
        values, points = [], []
        for t in range(self.n_frames):
            v, p = self.frame_terms(t, xs[t])
            values.append(v)
            points.append(p)
        total = float(sum(values))
        if self.weights.w_temporal > 0:
            for t in range(1, self.n_frames):
                total += self._temporal(xs[t - 1], points[t - 1], xs[t], points[t])
        return total, values, points

    def loss(self, x: np.ndarray) -> float:
        return self.evaluate(x)[0]

    def _local(self, t: int, xs: np.ndarray, xt: np.ndarray, points: List[np.ndarray]) -> float:
        """Every term that depends on frame t's variables."""
        value, p = self.frame_terms(t, xt)
        if self.weights.w_temporal > 0:
            if t > 0:
                value += self._temporal(xs[t - 1], points[t - 1], xt, p)
            if t + 1 < self.n_frames:
                value += self._temporal(xt, p, xs[t + 1], points[t + 1])
        return value

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Central differences, one frame block at a time."""
        xs = self.split(x)
        _, _, points = self.evaluate(x)
        grad = np.zeros_like(xs)
        for t in range(self.n_frames):
            for i in range(self.width):
                plus, minus = xs[t].copy(), xs[t].copy()
                plus[i] += GRADIENT_STEP
                minus[i] -= GRADIENT_STEP
                grad[t, i] = (self._local(t, xs, plus, points)
                              - self._local(t, xs, minus, points)) / (2.0 * GRADIENT_STEP)
        return grad.reshape(-1)

    def observations(self, x: np.ndarray) -> ObservationSequence:
        xs = self.split(x)
        frames = []
        for t, frame in enumerate(self.obs.frames):
            raw = frame.raw_kinematic_pose or frame.kinematic_pose
            frames.append(replace(frame, kinematic_pose=self.state(t, xs[t]), raw_kinematic_pose=raw))
        return replace(self.obs, frames=tuple(frames))


def refine_trajectory(model: BodyModel, obs: ObservationSequence, plane: GroundPlane,
                      weights: Optional[RefineWeights] = None,
                      k: int = PLANE_K, delta: float = PLANE_DELTA) -> RefineResult:
    """
    Minimize w_2d L_2d + w_t L_temp + w_g L_gp over the per-frame poses with
    L-BFGS on central-difference gradients. The input poses are kept when
    the search does not improve on them; original poses are preserved as
    raw_kinematic_pose.
    """
    weights = weights or RefineWeights()
    problem = _RefineProblem(model, obs, plane, weights, k, delta)
    initial = problem.loss(problem.x0)
    if weights.max_iterations == 0:
        return RefineResult(problem.observations(problem.x0), initial, initial, True, 0)

    result = minimize(problem.loss, problem.x0, jac=problem.gradient, method="L-BFGS-B",
                      options={"maxiter": weights.max_iterations})
    final = float(result.fun)
    x = result.x
    if not final <= initial:
        x, final = problem.x0, initial
    if not result.success:
        logger.warning(f"Kinematic refinement stopped early: {result.message}")
    logger.info(f"Refined {len(obs)} frames: loss {initial:.4f} -> {final:.4f} in {result.nit} iterations")
    return RefineResult(problem.observations(x), initial, final, bool(result.success), int(result.nit))


def refinement_points(model: BodyModel, states: Sequence[SimState]) -> np.ndarray:
    """(T, P, 3) surface points used by the temporal term."""
    surface = BodySurface.of_links(model, range(model.n_links), SURFACE_SAMPLES)
    return np.stack([surface.world(link_poses(model, s)) for s in states])
