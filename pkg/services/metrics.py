"""
Evaluation metrics for the PhysMotion pipeline.
Joint position errors under three alignments, image alignment, joint speed
error and the footskate/float contact artifacts.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from config import (
    CONTACT_MIN_VERTICES, CONTACT_THRESHOLD_KINEMATIC, FLOAT_DISTANCE, FOOTSKATE_DISTANCE,
)
from exceptions import ContractError
from motion.kinematics import link_poses
from motion.models import BodyModel, GroundPlane, MotionClip, ObservationSequence
from services.finite_differences import velocity
from services.objectives import project_points
from services.simulator import detect_foot_contacts, foot_sample_points
from utils.logger import logger

MM = 1000.0

METRIC_NAMES = ("mpjpe_g", "mpjpe", "mpjpe_pa", "mpjpe_2d", "velocity_error", "footskate", "float")
METRIC_UNITS = {
    "mpjpe_g": "mm", "mpjpe": "mm", "mpjpe_pa": "mm", "mpjpe_2d": "px",
    "velocity_error": "m/s", "footskate": "%", "float": "%",
}


def _check_pair(pred: np.ndarray, gt: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ContractError(f"Prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    if pred.ndim != 3 or pred.shape[-1] != 3:
        raise ContractError(f"Expected (frames, joints, 3) arrays, got {pred.shape}")
    return pred, gt


def _mean_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.linalg.norm(a - b, axis=-1)))


def first_frame_aligned(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """pred shifted so its first-frame joint centroid matches gt's."""
    return pred + (gt[0].mean(axis=0) - pred[0].mean(axis=0))


def mpjpe_g(pred: np.ndarray, gt: np.ndarray) -> float:
    """Global error in mm after one translation aligning the first frame."""
    pred, gt = _check_pair(pred, gt)
    return _mean_distance(first_frame_aligned(pred, gt), gt) * MM


def mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """Error in mm with the joint centroids translation aligned in every frame."""
    pred, gt = _check_pair(pred, gt)
    return _mean_distance(pred - pred.mean(axis=1, keepdims=True),
                          gt - gt.mean(axis=1, keepdims=True)) * MM


def procrustes_align(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """
    Similarity transform (rotation, translation, scale) of one frame's
    (joints, 3) prediction onto gt, least squares.

    Raises:
        ContractError: fewer than 3 joints or collinear joints
    """
    if pred.shape[0] < 3:
        raise ContractError("Procrustes alignment needs at least 3 joints")
    mu_x, mu_y = gt.mean(axis=0), pred.mean(axis=0)
    x0, y0 = gt - mu_x, pred - mu_y
    norm_x, norm_y = np.linalg.norm(x0), np.linalg.norm(y0)
    if norm_x < 1e-12 or norm_y < 1e-12:
        raise ContractError("Procrustes alignment of coincident joints")
    x0, y0 = x0 / norm_x, y0 / norm_y
    for pts in (x0, y0):
        s = np.linalg.svd(pts, compute_uv=False)
        if s[1] < 1e-9 * max(s[0], 1.0):
            raise ContractError("Procrustes alignment of collinear joints")

    u, s, vt = np.linalg.svd(x0.T @ y0)
    v = vt.T
    # no reflections
    sign = np.sign(np.linalg.det(v @ u.T)) or 1.0
    v[:, -1] *= sign
    s[-1] *= sign
    r = v @ u.T
    scale = s.sum() * norm_x / norm_y
    t = mu_x - scale * mu_y @ r
    return scale * pred @ r + t


def mpjpe_pa(pred: np.ndarray, gt: np.ndarray) -> float:
    """Error in mm after per-frame Procrustes alignment."""
    pred, gt = _check_pair(pred, gt)
    aligned = np.stack([procrustes_align(p, g) for p, g in zip(pred, gt)])
    return _mean_distance(aligned, gt) * MM


def mpjpe_2d(landmarks_3d: np.ndarray, landmarks_2d: np.ndarray,
             camera: np.ndarray) -> Tuple[float, int]:
    """
    Mean pixel distance between projected 3D landmarks and 2D landmarks,
    unweighted. Landmarks behind the camera are left out.

    Returns:
        (error in px, number of excluded landmarks)
    """
    landmarks_3d = np.asarray(landmarks_3d, dtype=float)
    landmarks_2d = np.asarray(landmarks_2d, dtype=float)
    if landmarks_3d.shape[:2] != landmarks_2d.shape[:2]:
        raise ContractError(f"Landmark counts differ: {landmarks_3d.shape[:2]} vs {landmarks_2d.shape[:2]}")
    pixels, in_front = project_points(np.asarray(camera, dtype=float), landmarks_3d)
    excluded = int(np.count_nonzero(~in_front))
    if excluded:
        logger.warning(f"{excluded} landmark(s) behind the camera excluded from MPJPE-2d")
    if not np.any(in_front):
        return float("nan"), excluded
    err = np.linalg.norm(pixels[in_front] - landmarks_2d[in_front], axis=-1)
    return float(err.mean()), excluded


def velocity_error(pred: np.ndarray, gt: np.ndarray, fps: float) -> float:
    """
    Mean over frames of the summed per-joint speed differences
    | |v_gt| - |v_pred| | in m/s, on first-frame aligned joints.
    """
    pred, gt = _check_pair(pred, gt)
    if pred.shape[0] < 2:
        raise ContractError("Velocity error needs at least 2 frames")
    speed_pred = np.linalg.norm(velocity(first_frame_aligned(pred, gt), fps), axis=-1)
    speed_gt = np.linalg.norm(velocity(gt, fps), axis=-1)
    return float(np.abs(speed_gt - speed_pred).sum(axis=1).mean())


# ==================== Contact artifacts ====================

def ankle_positions(clip: MotionClip, model: BodyModel) -> np.ndarray:
    """(frames, feet, 3) world positions of the joints driving the feet."""
    return clip.joint_positions[:, [k + 1 for k in model.ankle_joints]]


def foot_clearance(clip: MotionClip, model: BodyModel, plane: GroundPlane) -> np.ndarray:
    """(frames, feet) lowest signed distance of each foot's surface samples."""
    samples = foot_sample_points(model)
    out = np.empty((len(clip), len(samples)))
    for t, state in enumerate(clip.states):
        poses = link_poses(model, state)
        for f, (link, pts) in enumerate(zip(model.foot_links, samples)):
            world = pts @ poses.rotations[link].T + poses.positions[link]
            out[t, f] = plane.signed_distance(world).min()
    return out


def footskate(clip: MotionClip, model: BodyModel, plane: GroundPlane,
              d: float = CONTACT_THRESHOLD_KINEMATIC, n_vertices: int = CONTACT_MIN_VERTICES,
              distance: float = FOOTSKATE_DISTANCE,
              contacts: Optional[np.ndarray] = None) -> float:
    """
    Percentage of frame transitions in which a foot that is in contact at
    both frames moves its ankle by more than `distance`.
    """
    if len(clip) < 2 or not model.foot_links:
        return 0.0
    if contacts is None:
        contacts = detect_foot_contacts(clip, model, plane, d=d, n_vertices=n_vertices)
    ankles = ankle_positions(clip, model)
    moved = np.linalg.norm(np.diff(ankles, axis=0), axis=-1) > distance
    planted = contacts[1:] & contacts[:-1]
    return float(np.mean(np.any(moved & planted, axis=1)) * 100.0)


def float_metric(clip: MotionClip, model: BodyModel, plane: GroundPlane,
                 d: float = CONTACT_THRESHOLD_KINEMATIC, n_vertices: int = CONTACT_MIN_VERTICES,
                 distance: float = FLOAT_DISTANCE,
                 contacts: Optional[np.ndarray] = None) -> float:
    """Percentage of frames where a foot is out of contact yet within `distance` of the plane."""
    if not model.foot_links:
        return 0.0
    if contacts is None:
        contacts = detect_foot_contacts(clip, model, plane, d=d, n_vertices=n_vertices)
    hovering = ~contacts & (foot_clearance(clip, model, plane) <= distance)
    return float(np.mean(np.any(hovering, axis=1)) * 100.0)


def contact_artifacts(clip: MotionClip, model: BodyModel, plane: GroundPlane,
                      d: float = CONTACT_THRESHOLD_KINEMATIC) -> Dict[str, float]:
    """Footskate and float percentages from one contact detection pass."""
    contacts = detect_foot_contacts(clip, model, plane, d=d)
    return {
        "footskate": footskate(clip, model, plane, contacts=contacts),
        "float": float_metric(clip, model, plane, contacts=contacts),
    }


# ==================== Report ====================

@dataclass
class EvaluationReport:
    """All metrics of one prediction; mpjpe_2d is NaN without observations."""
    metrics: Dict[str, float]
    frames: int
    excluded_2d: int = 0
    reference: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "frames": self.frames,
            "metrics": {k: _jsonable(v) for k, v in self.metrics.items()},
            "units": dict(METRIC_UNITS),
            "excluded_2d": self.excluded_2d,
            "reference": {k: _jsonable(v) for k, v in self.reference.items()},
        }

    def table(self) -> str:
        header = f"{'metric':<16}{'value':>12}  {'unit':<4}"
        if self.reference:
            header += f"{'reference':>12}"
        lines = [header, "-" * len(header)]
        for name in METRIC_NAMES:
            value = self.metrics.get(name, float("nan"))
            row = f"{name:<16}{value:>12.4f}  {METRIC_UNITS[name]:<4}"
            if self.reference:
                ref = self.reference.get(name)
                row += f"{ref:>12.4f}" if ref is not None else f"{'':>12}"
            lines.append(row)
        return "\n".join(lines)


def _jsonable(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def evaluate_clips(pred: MotionClip, gt: MotionClip, model: BodyModel, plane: GroundPlane,
                   obs: Optional[ObservationSequence] = None,
                   d: float = CONTACT_THRESHOLD_KINEMATIC) -> EvaluationReport:
    """
    Compare a predicted clip with ground truth. Both clips are judged for
    contact with the same threshold d, whatever their source, since both are
    measured on the same primitive feet. The artifacts of the ground truth
    are reported alongside as reference.
    """
    if len(pred) != len(gt):
        raise ContractError(f"Prediction has {len(pred)} frames, ground truth {len(gt)}")
    if abs(pred.dt - gt.dt) > 1e-9:
        raise ContractError("Prediction and ground truth disagree on the frame rate")
    joints, gt_joints = pred.joint_positions, gt.joint_positions
    metrics = {
        "mpjpe_g": mpjpe_g(joints, gt_joints),
        "mpjpe": mpjpe(joints, gt_joints),
        "mpjpe_pa": mpjpe_pa(joints, gt_joints),
        "mpjpe_2d": float("nan"),
        "velocity_error": velocity_error(joints, gt_joints, pred.fps),
    }
    metrics.update(contact_artifacts(pred, model, plane, d))
    excluded = 0
    if obs is not None:
        if len(obs) != len(pred):
            raise ContractError(f"Observations have {len(obs)} frames, prediction {len(pred)}")
        metrics["mpjpe_2d"], excluded = mpjpe_2d(pred.landmark_positions, obs.landmarks(), obs.camera)
    reference = contact_artifacts(gt, model, plane, d)
    logger.info(f"Evaluated {len(pred)} frames: MPJPE-G {metrics['mpjpe_g']:.1f} mm, "
                f"footskate {metrics['footskate']:.1f}%")
    return EvaluationReport(metrics, len(pred), excluded, reference)
