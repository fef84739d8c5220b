"""
Reduced-coordinate rigid-body dynamics for the PhysMotion pipeline.
Builds the joint-space mass matrix and bias forces of the articulated
character, point Jacobians for contacts, and integrates states.

Generalized velocity layout: [base angular velocity (world), base origin
linear velocity (world), joint rates]. The base block is absent for
fixed-base models. A joint rate is the child-side angular velocity relative
to the parent, expressed in the rotated joint frame.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from motion.kinematics import LinkPoses, link_com_positions, link_poses
from motion.models import BodyModel, SimState
from utils.rotations import exp_map_to_matrix, matrix_to_exp_map, matrix_to_quat, quat_to_matrix


@dataclass(frozen=True, eq=False)
class DynamicsTerms:
    """Everything one integration step needs about the current configuration."""
    poses: LinkPoses
    coms: np.ndarray             # (links, 3) world COM of each link
    world_inertias: np.ndarray   # (links, 3, 3)
    angular_jacobians: np.ndarray  # (links, 3, n)
    com_jacobians: np.ndarray    # (links, 3, n)
    mass_matrix: np.ndarray      # (n, n)
    bias: np.ndarray             # (n,) Coriolis, centrifugal and gravity terms


def generalized_velocity(model: BodyModel, state: SimState) -> np.ndarray:
    if model.fixed_base:
        return np.array(state.qdot, dtype=float)
    return np.concatenate([state.base_ang_vel, state.base_lin_vel, state.qdot])


def _cross_columns(axes: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Matrix whose column c is axes[..., :, c] x r, i.e. -[r]x @ axes."""
    return np.stack([np.cross(axes[..., :, c], r) for c in range(3)], axis=-1)


def point_jacobians(model: BodyModel, poses: LinkPoses, points: np.ndarray,
                    links: np.ndarray) -> np.ndarray:
    """
    Linear-velocity Jacobians (P, 3, n) of world points rigidly attached to links.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    links = np.asarray(links, dtype=int).reshape(-1)
    n_points = points.shape[0]
    n = model.velocity_dim
    jac = np.zeros((n_points, 3, n))
    if not model.fixed_base:
        r = points - poses.positions[model.base_link]
        jac[:, :, 0:3] = _cross_columns(np.broadcast_to(np.eye(3), (n_points, 3, 3)), r)
        jac[:, :, 3:6] = np.eye(3)
    n_joints = len(model.joints)
    if n_joints and n_points:
        r = points[:, None, :] - poses.joint_centers[None, :, :]              # (P, J, 3)
        axes = np.broadcast_to(poses.joint_rotations[None], (n_points, n_joints, 3, 3))
        cols = _cross_columns(axes, r)                                         # (P, J, 3, 3)
        cols = cols * model.ancestor_mask[links][:, :, None, None]
        jac[:, :, model.base_dof:] = cols.transpose(0, 2, 1, 3).reshape(n_points, 3, 3 * n_joints)
    return jac


def angular_jacobians(model: BodyModel, poses: LinkPoses) -> np.ndarray:
    """World angular-velocity Jacobians (links, 3, n)."""
    n_links, n_joints = model.n_links, len(model.joints)
    jac = np.zeros((n_links, 3, model.velocity_dim))
    if not model.fixed_base:
        jac[:, :, 0:3] = np.eye(3)
    if n_joints:
        cols = poses.joint_rotations[None] * model.ancestor_mask[:, :, None, None]  # (L, J, 3, 3)
        jac[:, :, model.base_dof:] = cols.transpose(0, 2, 1, 3).reshape(n_links, 3, 3 * n_joints)
    return jac


def world_inertias(model: BodyModel, poses: LinkPoses) -> np.ndarray:
    rot = poses.rotations
    return rot @ model.link_inertias @ rot.transpose(0, 2, 1)


def _velocity_products(model: BodyModel, state: SimState, poses: LinkPoses,
                       coms: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-link angular velocity, COM velocity and the velocity-product
    accelerations (angular, COM linear) obtained with zero generalized
    acceleration. Forward pass of the recursive Newton-Euler algorithm.
    """
    n_links = model.n_links
    omega = np.zeros((n_links, 3))
    alpha = np.zeros((n_links, 3))
    vel = np.zeros((n_links, 3))
    acc = np.zeros((n_links, 3))
    b = model.base_link
    if not model.fixed_base:
        w = state.base_ang_vel
        r = coms[b] - state.base_position
        omega[b] = w
        vel[b] = state.base_lin_vel + np.cross(w, r)
        acc[b] = np.cross(w, np.cross(w, r))
    qdot = state.qdot.reshape(-1, 3) if len(model.joints) else np.zeros((0, 3))
    for k in model.traversal:
        joint = model.joints[k]
        p, c = joint.parent, joint.child
        o = poses.joint_centers[k]
        rel = poses.joint_rotations[k] @ qdot[k]
        r_po = o - coms[p]
        v_o = vel[p] + np.cross(omega[p], r_po)
        a_o = acc[p] + np.cross(alpha[p], r_po) + np.cross(omega[p], np.cross(omega[p], r_po))
        omega[c] = omega[p] + rel
        alpha[c] = alpha[p] + np.cross(omega[p], rel)
        r_oc = coms[c] - o
        vel[c] = v_o + np.cross(omega[c], r_oc)
        acc[c] = a_o + np.cross(alpha[c], r_oc) + np.cross(omega[c], np.cross(omega[c], r_oc))
    return omega, vel, alpha, acc


def gravity_vector(gravity: float, up: Optional[np.ndarray] = None) -> np.ndarray:
    """Gravity acceleration along -up (default world -y)."""
    up = np.array([0.0, 1.0, 0.0]) if up is None else np.asarray(up, dtype=float)
    return -gravity * up / np.linalg.norm(up)


def dynamics_terms(model: BodyModel, state: SimState, gravity: np.ndarray) -> DynamicsTerms:
    """
    Composite mass matrix and bias vector h so that M dv/dt + h = generalized force.

    Raises:
        ContractError: state dimensions do not match the model
    """
    poses = link_poses(model, state)
    coms = link_com_positions(model, poses)
    inertias = world_inertias(model, poses)
    jw = angular_jacobians(model, poses)
    jv = point_jacobians(model, poses, coms, np.arange(model.n_links))
    masses = model.link_masses
    mass_matrix = (np.einsum("l,lin,lim->nm", masses, jv, jv)
                   + np.einsum("lin,lij,ljm->nm", jw, inertias, jw))
    mass_matrix = 0.5 * (mass_matrix + mass_matrix.T)

    omega, _, alpha, acc = _velocity_products(model, state, poses, coms)
    linear = masses[:, None] * (acc - gravity)
    iw = np.einsum("lij,lj->li", inertias, omega)
    angular = np.einsum("lij,lj->li", inertias, alpha) + np.cross(omega, iw)
    bias = np.einsum("lin,li->n", jv, linear) + np.einsum("lin,li->n", jw, angular)
    return DynamicsTerms(poses, coms, inertias, jw, jv, mass_matrix, bias)


def factorize(matrix: np.ndarray):
    """Cholesky factor of an SPD system matrix."""
    try:
        return cho_factor(matrix, lower=True, check_finite=True)
    except (LinAlgError, ValueError):
        raise np.linalg.LinAlgError("System matrix is not positive definite")


def solve(factor, rhs: np.ndarray) -> np.ndarray:
    return cho_solve(factor, rhs, check_finite=False)


def forward_dynamics(model: BodyModel, state: SimState, torques: np.ndarray,
                     gravity: np.ndarray) -> np.ndarray:
    """Generalized acceleration under joint torques and gravity (no contact)."""
    terms = dynamics_terms(model, state, gravity)
    force = -terms.bias
    force[model.base_dof:] += torques
    return solve(factorize(terms.mass_matrix), force)


def inverse_dynamics(model: BodyModel, state: SimState, accel: np.ndarray,
                     gravity: np.ndarray) -> np.ndarray:
    """Generalized force producing `accel`: M a + h."""
    terms = dynamics_terms(model, state, gravity)
    return terms.mass_matrix @ accel + terms.bias


def integrate(model: BodyModel, state: SimState, velocity: np.ndarray, dt: float) -> SimState:
    """
    Semi-implicit Euler position update with the end-of-step velocity.
    Joint rotations compose on the right, the base rotation on the left.
    """
    n_joints = len(model.joints)
    if model.fixed_base:
        base_w, base_v = np.zeros(3), np.zeros(3)
        qdot = velocity
        position, quat = state.base_position, state.base_orientation
    else:
        base_w, base_v, qdot = velocity[0:3], velocity[3:6], velocity[6:]
        position = state.base_position + dt * base_v
        rot = exp_map_to_matrix(base_w * dt) @ quat_to_matrix(state.base_orientation)
        quat = matrix_to_quat(rot)
        quat = quat / np.linalg.norm(quat)
        if quat[3] < 0:
            quat = -quat
    if n_joints:
        local = exp_map_to_matrix(state.q.reshape(n_joints, 3)).reshape(n_joints, 3, 3)
        step = exp_map_to_matrix(qdot.reshape(n_joints, 3) * dt).reshape(n_joints, 3, 3)
        q = matrix_to_exp_map(local @ step).reshape(-1)
    else:
        q = state.q
    return SimState(position, quat, q, base_v, base_w, qdot)


def momentum_rows(model: BodyModel, poses: LinkPoses) -> np.ndarray:
    """
    (6, n) rows of the mass matrix that map a generalized velocity to the
    angular momentum about the base origin and the linear momentum.
    Free-base models only.
    """
    coms = link_com_positions(model, poses)
    jw = angular_jacobians(model, poses)
    jv = point_jacobians(model, poses, coms, np.arange(model.n_links))
    return (np.einsum("l,lin,lim->nm", model.link_masses, jv[:, :, :6], jv)
            + np.einsum("lin,lij,ljm->nm", jw[:, :, :6], world_inertias(model, poses), jw))


def world_momentum(model: BodyModel, poses: LinkPoses, rows: np.ndarray,
                   nu: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Linear momentum and angular momentum about the world origin from momentum rows."""
    base_momentum = rows @ nu
    linear = base_momentum[3:]
    return linear, base_momentum[:3] + np.cross(poses.positions[model.base_link], linear)


def project_momentum(model: BodyModel, state: SimState, linear: np.ndarray,
                     angular: np.ndarray) -> SimState:
    """
    Shift the base velocity so the state carries the given linear momentum and
    angular momentum about the world origin. The shift is the smallest one in
    the kinetic-energy metric; joint rates are untouched.
    """
    if model.fixed_base:
        return state
    poses = link_poses(model, state)
    rows = momentum_rows(model, poses)
    current_linear, current_angular = world_momentum(model, poses, rows, generalized_velocity(model, state))
    d_linear = np.asarray(linear, dtype=float) - current_linear
    d_angular = (np.asarray(angular, dtype=float) - current_angular
                 - np.cross(poses.positions[model.base_link], d_linear))
    delta = solve(factorize(rows[:, :6]), np.concatenate([d_angular, d_linear]))
    return state.replace(base_ang_vel=state.base_ang_vel + delta[:3],
                         base_lin_vel=state.base_lin_vel + delta[3:])


# ==================== Diagnostics ====================

def kinetic_energy(model: BodyModel, state: SimState) -> float:
    terms = dynamics_terms(model, state, np.zeros(3))
    nu = generalized_velocity(model, state)
    return float(0.5 * nu @ terms.mass_matrix @ nu)


def potential_energy(model: BodyModel, state: SimState, gravity: np.ndarray) -> float:
    coms = link_com_positions(model, link_poses(model, state))
    return float(-np.sum(model.link_masses * (coms @ gravity)))


def momentum(model: BodyModel, state: SimState) -> Tuple[np.ndarray, np.ndarray]:
    """Linear momentum and angular momentum about the world origin."""
    poses = link_poses(model, state)
    coms = link_com_positions(model, poses)
    omega, vel, _, _ = _velocity_products(model, state, poses, coms)
    masses = model.link_masses
    linear = (masses[:, None] * vel).sum(axis=0)
    spin = np.einsum("lij,lj->li", world_inertias(model, poses), omega)
    angular = (np.cross(coms, masses[:, None] * vel) + spin).sum(axis=0)
    return linear, angular
