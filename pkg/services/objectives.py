"""
Trajectory objectives for the PhysMotion pipeline.
Scores a simulated MotionClip against the kinematic evidence: centre of mass,
joint angles, 2D landmark reprojection, pose prior, acceleration total
variation and joint limits.
"""
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np

from config import BEHIND_CAMERA_PENALTY, LIMIT_PENALTY_RATE
from exceptions import ContractError
from motion.kinematics import forward_kinematics
from motion.models import BodyModel, MotionClip, ObservationSequence, SimState
from services.finite_differences import acceleration, velocity
from utils.rotations import exp_map_to_quat

MIN_DEPTH = 1e-6

# Published search grid per weight (documented, never searched automatically)
WEIGHT_GRID: Dict[str, Tuple[float, ...]] = {
    "w_com": (1.0, 2.0, 5.0, 10.0, 15.0, 25.0),
    "w_pose": (0.1, 0.5, 1.0, 2.0),
    "w_2d": (1.0, 2.0, 4.0, 8.0, 10.0),
    "w_nf": (0.001, 0.1, 1.0, 10.0),
    "w_tv": (0.1, 1.0, 10.0),
    "w_lim": (0.1, 1.0, 10.0),
}

TERMS = ("com", "pose", "2d", "nf", "tv", "lim")


@dataclass(frozen=True)
class ObjectiveWeights:
    """Weights of the composite loss; defaults are the published values."""
    w_com: float = 15.0
    w_pose: float = 0.5
    w_2d: float = 4.0
    w_nf: float = 1.0
    w_tv: float = 1.0
    w_lim: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value >= 0:
                raise ContractError(f"Weight {name} must be non-negative, got {value}")

    @classmethod
    def preset(cls, name: str) -> "ObjectiveWeights":
        """Per-dataset weights (h36m, aist, humaneva)."""
        presets = {"h36m": cls(), "aist": cls(), "humaneva": cls()}
        try:
            return presets[name.lower()]
        except KeyError:
            raise ContractError(f"Unknown weight preset '{name}'; choose from {', '.join(presets)}")

    @classmethod
    def from_run_config(cls, section) -> "ObjectiveWeights":
        return cls(**section.model_dump())

    def by_term(self) -> Dict[str, float]:
        return dict(zip(TERMS, (self.w_com, self.w_pose, self.w_2d, self.w_nf, self.w_tv, self.w_lim)))


# ==================== Pose priors ====================

@runtime_checkable
class PosePrior(Protocol):
    """Anything that scores a joint-angle vector with a non-negative energy."""

    @property
    def dof_count(self) -> int: ...

    def latent_energy(self, pose: np.ndarray) -> float: ...


@dataclass(frozen=True, eq=False)
class QuadraticPosePrior:
    """
    Linear latent map z(q) = W (q - rest); the energy is ||z||.

    A whitening transform fitted to example poses is the linear special case
    of a flow prior and can be exported to / loaded from a prior file.
    """
    rest: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        rest = np.array(self.rest, dtype=float)
        w = np.array(self.weights, dtype=float)
        if rest.ndim != 1:
            raise ContractError("Prior rest pose must be a vector")
        if w.ndim != 2 or w.shape[1] != rest.shape[0]:
            raise ContractError(f"Prior weights must be (k, {rest.shape[0]}), got {w.shape}")
        if not (np.all(np.isfinite(rest)) and np.all(np.isfinite(w))):
            raise ContractError("Prior parameters must be finite")
        rest.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "rest", rest)
        object.__setattr__(self, "weights", w)

    @classmethod
    def identity(cls, dof_count: int) -> "QuadraticPosePrior":
        """Default prior: zero rest pose, unit weights."""
        return cls(np.zeros(dof_count), np.eye(dof_count))

    @classmethod
    def from_samples(cls, poses: np.ndarray, regularization: float = 1e-3) -> "QuadraticPosePrior":
        """Whitening prior from example poses: rest = mean, W^T W = (cov + eps I)^-1."""
        poses = np.asarray(poses, dtype=float)
        if poses.ndim != 2 or poses.shape[0] < 2:
            raise ContractError("Need at least two example poses")
        mean = poses.mean(axis=0)
        cov = np.cov(poses, rowvar=False) + regularization * np.eye(poses.shape[1])
        chol = np.linalg.cholesky(np.linalg.inv(cov))
        return cls(mean, chol.T)

    @property
    def dof_count(self) -> int:
        return self.rest.shape[0]

    def latent(self, pose: np.ndarray) -> np.ndarray:
        pose = np.asarray(pose, dtype=float)
        if pose.shape != self.rest.shape:
            raise ContractError(f"Pose has {pose.shape[-1]} DOF, prior expects {self.dof_count}")
        return self.weights @ (pose - self.rest)

    def latent_energy(self, pose: np.ndarray) -> float:
        return float(np.linalg.norm(self.latent(pose)))


# ==================== Targets ====================

def project_points(camera: np.ndarray, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pinhole projection of (..., 3) world points with a 3x4 camera matrix.

    Returns pixel coordinates (..., 2) and a mask of points in front of the
    camera; pixels of points behind it are NaN.
    """
    pts = np.asarray(points, dtype=float)
    h = pts @ camera[:, :3].T + camera[:, 3]
    depth = h[..., 2]
    in_front = depth > MIN_DEPTH
    safe = np.where(in_front, depth, 1.0)
    pixels = h[..., :2] / safe[..., None]
    pixels[~in_front] = np.nan
    return pixels, in_front


@dataclass(frozen=True, eq=False)
class ObjectiveTargets:
    """Kinematic evidence a rollout is compared with, precomputed once per window."""
    fps: float
    com: np.ndarray                 # (T, 3)
    com_velocity: np.ndarray        # (T, 3)
    kinematic_states: Tuple[SimState, ...]
    landmarks_2d: np.ndarray        # (T, N, 2)
    scores: np.ndarray              # (T, N) zero for invisible landmarks
    camera: np.ndarray              # (3, 4)
    landmark_index: np.ndarray      # (N,) model landmark per observed landmark
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def from_observations(cls, model: BodyModel, obs: ObservationSequence) -> "ObjectiveTargets":
        """
        Raises:
            ContractError: observed landmarks missing from the model, or pose
                dimensions that disagree with it
        """
        ids = model.landmark_ids
        missing = [name for name in obs.landmark_ids if name not in ids]
        if missing:
            raise ContractError(f"Landmarks not attached to the model: {', '.join(missing)}")
        com = np.stack([forward_kinematics(model, s).com for s in obs.kinematic_poses])
        com_velocity = velocity(com, obs.fps) if len(obs) > 1 else np.zeros_like(com)
        return cls(
            fps=obs.fps, com=com, com_velocity=com_velocity,
            kinematic_states=tuple(obs.kinematic_poses),
            landmarks_2d=obs.landmarks(), scores=obs.scores(), camera=np.asarray(obs.camera),
            landmark_index=np.array([ids.index(name) for name in obs.landmark_ids], dtype=int),
            lower=model.lower_limits, upper=model.upper_limits,
        )

    def __len__(self) -> int:
        return len(self.kinematic_states)


# ==================== Terms ====================

def _check_frames(a: int, b: int, what: str) -> None:
    if a != b:
        raise ContractError(f"{what}: {a} frames vs {b} frames")


def loss_com(com: np.ndarray, target_com: np.ndarray, fps: float,
             target_velocity: Optional[np.ndarray] = None) -> float:
    """Sum over frames of squared COM position error plus squared COM velocity error."""
    com = np.asarray(com, dtype=float)
    target_com = np.asarray(target_com, dtype=float)
    _check_frames(com.shape[0], target_com.shape[0], "COM trajectories")
    if com.shape[0] > 1:
        vel = velocity(com, fps)
        target_vel = velocity(target_com, fps) if target_velocity is None else target_velocity
    else:
        vel = target_vel = np.zeros_like(com)
    return float(np.sum((com - target_com) ** 2) + np.sum((vel - target_vel) ** 2))


def pose_quaternions(state: SimState) -> np.ndarray:
    """(joints + 1, 4) quaternions: base orientation first, then every joint."""
    joints = exp_map_to_quat(state.q.reshape(-1, 3)).reshape(-1, 4)
    return np.concatenate([state.base_orientation[None, :], joints], axis=0)


def loss_pose(states: Sequence[SimState], kinematic_states: Sequence[SimState]) -> float:
    """
    Sum over frames and joints (base orientation included) of
    arccos(|<quat, quat_kinematic>|), clamped into [0, 1] before arccos.
    """
    _check_frames(len(states), len(kinematic_states), "Pose trajectories")
    total = 0.0
    for s, k in zip(states, kinematic_states):
        if s.dof_count != k.dof_count:
            raise ContractError(f"Pose has {s.dof_count} DOF, kinematic pose {k.dof_count}")
        dots = np.abs(np.sum(pose_quaternions(s) * pose_quaternions(k), axis=1))
        total += float(np.sum(np.arccos(np.clip(dots, 0.0, 1.0))))
    return total


def loss_2d(landmarks_3d: np.ndarray, landmarks_2d: np.ndarray, scores: np.ndarray,
            camera: np.ndarray, behind_penalty: float = BEHIND_CAMERA_PENALTY) -> float:
    """
    Score-weighted sum of reprojection distances (pixels). A landmark behind
    the camera contributes score * behind_penalty instead.
    """
    landmarks_3d = np.asarray(landmarks_3d, dtype=float)
    landmarks_2d = np.asarray(landmarks_2d, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if landmarks_3d.shape[:2] != landmarks_2d.shape[:2] or scores.shape != landmarks_2d.shape[:2]:
        raise ContractError(
            f"Landmark arrays disagree: {landmarks_3d.shape}, {landmarks_2d.shape}, {scores.shape}")
    pixels, in_front = project_points(camera, landmarks_3d)
    dist = np.linalg.norm(np.where(in_front[..., None], pixels - landmarks_2d, 0.0), axis=-1)
    per_landmark = np.where(in_front, dist, behind_penalty)
    return float(np.sum(np.where(scores > 0, scores * per_landmark, 0.0)))


def loss_tv(joint_positions: np.ndarray, fps: float) -> float:
    """(1/J) sum over t, j of ||a[t, j] - a[t-1, j]||_1 on second-difference accelerations."""
    x = np.asarray(joint_positions, dtype=float)
    if x.ndim != 3 or x.shape[0] < 4:
        raise ContractError("Total variation needs at least 4 frames of (frames, joints, 3) positions")
    acc = acceleration(x, fps)
    return float(np.sum(np.abs(np.diff(acc, axis=0))) / x.shape[1])


def loss_limits(poses: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                rate: float = LIMIT_PENALTY_RATE) -> float:
    """Sum over axes of exp(rate * violation) - 1 for each limit violation."""
    poses = np.asarray(poses, dtype=float)
    violation = np.maximum(np.maximum(lower - poses, poses - upper), 0.0)
    return float(np.sum(np.expm1(rate * violation)))


def prior_energy(poses: np.ndarray, prior: PosePrior) -> float:
    """Sum of the prior's latent energy over frames."""
    poses = np.asarray(poses, dtype=float)
    if poses.ndim != 2 or poses.shape[1] != prior.dof_count:
        raise ContractError(f"Poses have shape {poses.shape}, prior expects {prior.dof_count} DOF")
    return float(sum(prior.latent_energy(q) for q in poses))


# ==================== Composite ====================

@dataclass(frozen=True)
class LossBreakdown:
    """Raw term values, their weighted contributions and the total."""
    terms: Dict[str, float]
    weighted: Dict[str, float]
    total: float

    def to_dict(self) -> Dict[str, float]:
        out = {f"L_{k}": v for k, v in self.terms.items()}
        out["total"] = self.total
        return out


def breakdown_from_terms(terms: Dict[str, float], weights: ObjectiveWeights) -> LossBreakdown:
    w = weights.by_term()
    weighted = {k: w[k] * terms[k] for k in TERMS}
    total = 0.0
    for k in TERMS:
        total += weighted[k]
    return LossBreakdown(dict(terms), weighted, total)


def loss_terms(clip: MotionClip, targets: ObjectiveTargets, prior: PosePrior) -> Dict[str, float]:
    """Unweighted value of every term."""
    _check_frames(len(clip), len(targets), "Clip vs observations")
    poses = clip.poses()
    landmarks = clip.landmark_positions[:, targets.landmark_index]
    return {
        "com": loss_com(clip.com, targets.com, targets.fps, targets.com_velocity),
        "pose": loss_pose(clip.states, targets.kinematic_states),
        "2d": loss_2d(landmarks, targets.landmarks_2d, targets.scores, targets.camera),
        "nf": prior_energy(poses, prior),
        "tv": loss_tv(clip.joint_positions, targets.fps),
        "lim": loss_limits(poses, targets.lower, targets.upper),
    }


def total_loss(clip: MotionClip, targets: ObjectiveTargets, weights: ObjectiveWeights,
               prior: PosePrior) -> LossBreakdown:
    """
    Weighted sum of all terms; the breakdown's weighted entries sum to total.

    Raises:
        ContractError: frame counts or dimensions disagree
    """
    return breakdown_from_terms(loss_terms(clip, targets, prior), weights)


def zero_breakdown() -> LossBreakdown:
    zeros = {k: 0.0 for k in TERMS}
    return LossBreakdown(zeros, dict(zeros), 0.0)


def weighted_sum(values: List[LossBreakdown]) -> Dict[str, float]:
    """Term-wise sum of several breakdowns (per-window reports)."""
    out = {k: 0.0 for k in TERMS}
    for b in values:
        for k in TERMS:
            out[k] += b.weighted[k]
    return out
