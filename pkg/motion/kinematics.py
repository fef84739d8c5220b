"""
Forward kinematics for the PhysMotion pipeline.
Composes joint transforms from the base to the leaves to obtain link poses,
joint centres, landmark positions and the whole-body centre of mass.
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from motion.models import BodyModel, SimState
from utils.rotations import exp_map_to_matrix, quat_to_matrix


@dataclass(frozen=True, eq=False)
class LinkPoses:
    """World poses of every link and joint frame for one state."""
    rotations: np.ndarray        # (links, 3, 3)
    positions: np.ndarray        # (links, 3)
    joint_rotations: np.ndarray  # (joints, 3, 3) child-side joint frame in world
    joint_centers: np.ndarray    # (joints, 3)


@dataclass(frozen=True, eq=False)
class FKResult:
    joint_positions: np.ndarray     # (joints + 1, 3), base origin first
    landmark_positions: np.ndarray  # (landmarks, 3)
    com: np.ndarray                 # (3,)


def link_poses(model: BodyModel, state: SimState) -> LinkPoses:
    """World rotation and origin of every link."""
    state.check_model(model)
    n_links = model.n_links
    n_joints = len(model.joints)
    rotations = np.zeros((n_links, 3, 3))
    positions = np.zeros((n_links, 3))
    joint_rotations = np.zeros((n_joints, 3, 3))
    joint_centers = np.zeros((n_joints, 3))

    rotations[model.base_link] = quat_to_matrix(state.base_orientation)
    positions[model.base_link] = state.base_position
    if n_joints:
        local = exp_map_to_matrix(state.q.reshape(n_joints, 3))
        local = local.reshape(n_joints, 3, 3)
    for k in model.traversal:
        joint = model.joints[k]
        rp, pp = rotations[joint.parent], positions[joint.parent]
        fp, fc = joint.frame_in_parent, joint.frame_in_child
        rj = rp @ fp[:3, :3] @ local[k]
        center = pp + rp @ fp[:3, 3]
        rc = rj @ fc[:3, :3].T
        joint_rotations[k] = rj
        joint_centers[k] = center
        rotations[joint.child] = rc
        positions[joint.child] = center - rc @ fc[:3, 3]
    return LinkPoses(rotations, positions, joint_rotations, joint_centers)


def points_to_world(poses: LinkPoses, link: int, points: np.ndarray) -> np.ndarray:
    """Map link-frame points (n, 3) to world coordinates."""
    return np.asarray(points) @ poses.rotations[link].T + poses.positions[link]


def link_com_positions(model: BodyModel, poses: LinkPoses) -> np.ndarray:
    """World COM of every link, (links, 3)."""
    return np.einsum("lij,lj->li", poses.rotations, model.link_coms) + poses.positions


def center_of_mass(model: BodyModel, poses: LinkPoses) -> np.ndarray:
    masses = model.link_masses
    return masses @ link_com_positions(model, poses) / masses.sum()


def landmark_positions(model: BodyModel, poses: LinkPoses) -> np.ndarray:
    if not model.landmarks:
        return np.zeros((0, 3))
    links = np.array([lm.link for lm in model.landmarks])
    offsets = np.stack([lm.offset for lm in model.landmarks])
    return np.einsum("nij,nj->ni", poses.rotations[links], offsets) + poses.positions[links]


def joint_positions(model: BodyModel, poses: LinkPoses) -> np.ndarray:
    """Base origin followed by every joint centre."""
    base = poses.positions[model.base_link][None, :]
    if len(model.joints) == 0:
        return base
    return np.concatenate([base, poses.joint_centers], axis=0)


def forward_kinematics(model: BodyModel, state: SimState) -> FKResult:
    """
    Joint world positions, landmark world positions and COM for one state.

    Raises:
        ContractError: state dimensions do not match the model
    """
    poses = link_poses(model, state)
    return FKResult(
        joint_positions=joint_positions(model, poses),
        landmark_positions=landmark_positions(model, poses),
        com=center_of_mass(model, poses),
    )


def trajectory_kinematics(model: BodyModel, states: Sequence[SimState]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stacked (joint positions, landmark positions, com) over a sequence of states."""
    joints: List[np.ndarray] = []
    landmarks: List[np.ndarray] = []
    coms: List[np.ndarray] = []
    for state in states:
        fk = forward_kinematics(model, state)
        joints.append(fk.joint_positions)
        landmarks.append(fk.landmark_positions)
        coms.append(fk.com)
    return np.stack(joints), np.stack(landmarks), np.stack(coms)
