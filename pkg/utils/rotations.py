"""
Rotation and rigid-transform helpers for the PhysMotion pipeline.
Spherical joints are stored as exponential-map 3-vectors; quaternions are
(x, y, z, w) ordered, matching scipy.
"""
from typing import Tuple

import numpy as np
from scipy.spatial.transform import Rotation


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(a) @ b == cross(a, b)."""
    x, y, z = v
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def wrap_angle(angle):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)


def exp_map_to_matrix(rotvec: np.ndarray) -> np.ndarray:
    """Rotation matrix (or stack of matrices) from exponential-map vectors."""
    return Rotation.from_rotvec(np.array(rotvec, dtype=float)).as_matrix()


def matrix_to_exp_map(matrix: np.ndarray) -> np.ndarray:
    """Exponential-map vector(s) with angle in [0, pi]."""
    return Rotation.from_matrix(np.array(matrix, dtype=float)).as_rotvec()


def exp_map_to_quat(rotvec: np.ndarray) -> np.ndarray:
    """Unit quaternion(s), (x, y, z, w) order."""
    return Rotation.from_rotvec(np.array(rotvec, dtype=float)).as_quat()


def quat_to_matrix(quat: np.ndarray) -> np.ndarray:
    return Rotation.from_quat(np.array(quat, dtype=float)).as_matrix()


def matrix_to_quat(matrix: np.ndarray) -> np.ndarray:
    return Rotation.from_matrix(np.array(matrix, dtype=float)).as_quat()


def normalize_quat(quat: np.ndarray) -> np.ndarray:
    q = np.asarray(quat, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def make_transform(rotation: np.ndarray = None, translation: np.ndarray = None) -> np.ndarray:
    """4x4 homogeneous transform from a rotation matrix and translation."""
    t = np.eye(4)
    if rotation is not None:
        t[:3, :3] = rotation
    if translation is not None:
        t[:3, 3] = translation
    return t


def invert_transform(transform: np.ndarray) -> np.ndarray:
    rot = transform[:3, :3]
    out = np.eye(4)
    out[:3, :3] = rot.T
    out[:3, 3] = -rot.T @ transform[:3, 3]
    return out


def transform_points(transform: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a 4x4 transform to an (..., 3) array of points."""
    pts = np.asarray(points, dtype=float)
    return pts @ transform[:3, :3].T + transform[:3, 3]


def split_transform(transform: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return transform[:3, :3], transform[:3, 3]


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Smallest rotation matrix taking unit vector a onto unit vector b."""
    a = np.asarray(a, dtype=float) / np.linalg.norm(a)
    b = np.asarray(b, dtype=float) / np.linalg.norm(b)
    axis = np.cross(a, b)
    s = np.linalg.norm(axis)
    c = float(np.dot(a, b))
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        # 180 degrees about any axis orthogonal to a
        ortho = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = np.cross(a, ortho)
        axis /= np.linalg.norm(axis)
        return exp_map_to_matrix(np.pi * axis)
    return exp_map_to_matrix(axis / s * np.arctan2(s, c))
