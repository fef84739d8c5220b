"""
Forward simulation service for the PhysMotion pipeline.
Advances the articulated character under gravity, ground contact and PD
joint control at a fixed rate, and records MotionClips at the observation
frame rate.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from config import (
    BAUMGARTE, CONTACT_ITERATIONS, CONTACT_MARGIN, CONTACT_MIN_VERTICES, CONTACT_SLOP,
    CONTACT_THRESHOLD_DYNAMIC, CONTACT_THRESHOLD_KINEMATIC, FRICTION, GRAVITY, KD, KP,
    PRIMITIVE_SURFACE_SAMPLES, SIM_RATE_HZ,
)
from enums import ClipSource, PDMode
from exceptions import ContractError, SimulationDivergedError
from motion.kinematics import forward_kinematics, link_poses
from motion.models import BodyModel, GroundPlane, MotionClip, SimState, StaticBox
from services.body_builder import sample_surface
from services.contact import (
    ContactRecord, collect_contacts, compliant_normal_impulses, contact_frames,
    normal_velocity_targets, solve_contacts,
)
from services.dynamics import (
    dynamics_terms, factorize, generalized_velocity, gravity_vector, integrate,
    point_jacobians, project_momentum, solve, world_momentum,
)
from utils.logger import logger
from utils.rotations import wrap_angle

DIVERGENCE_LIMIT = 1e6
SATURATION_PASSES = 4


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Simulation parameters; defaults are the published constants."""
    dt: float = 1.0 / SIM_RATE_HZ
    gravity: float = GRAVITY
    friction: float = FRICTION
    kp: float = KP
    kd: float = KD
    ground: GroundPlane = field(default_factory=GroundPlane)
    contact_solver_iterations: int = CONTACT_ITERATIONS
    contact_slop: float = CONTACT_SLOP
    pd_mode: PDMode = PDMode.STABLE
    static_boxes: Sequence[StaticBox] = ()
    self_collision: bool = False
    contact_margin: float = CONTACT_MARGIN
    baumgarte: float = BAUMGARTE

    def __post_init__(self):
        object.__setattr__(self, "pd_mode", PDMode(self.pd_mode))
        object.__setattr__(self, "static_boxes", tuple(self.static_boxes))
        if not self.dt > 0:
            raise ContractError("dt must be positive")
        if self.friction < 0:
            raise ContractError("friction must be non-negative")
        if self.kp < 0 or self.kd < 0:
            raise ContractError("kp and kd must be non-negative")
        if self.contact_solver_iterations < 1:
            raise ContractError("contact_solver_iterations must be at least 1")
        if self.self_collision:
            raise ContractError("Self-collision between primitives is not supported")

    @property
    def gravity_vector(self) -> np.ndarray:
        """Gravity along the ground's downward normal."""
        return gravity_vector(self.gravity, self.ground.normal)

    @classmethod
    def from_run_config(cls, section, ground: Optional[GroundPlane] = None,
                        static_boxes: Sequence[StaticBox] = ()) -> "SimConfig":
        """Build from the `sim` section of a run configuration."""
        return cls(dt=1.0 / section.rate_hz, gravity=section.gravity, friction=section.friction,
                   kp=section.kp, kd=section.kd, ground=ground or GroundPlane(),
                   contact_solver_iterations=section.contact_solver_iterations,
                   contact_slop=section.contact_slop, pd_mode=section.pd_mode,
                   static_boxes=static_boxes, self_collision=section.self_collision)


@dataclass(frozen=True, eq=False)
class ControlTarget:
    """Target joint angles (exponential map per joint), each component reduced into [-2pi, 2pi]."""
    q_hat: np.ndarray

    def __post_init__(self):
        q = np.array(self.q_hat, dtype=float, copy=True)
        if q.ndim != 1 or not np.all(np.isfinite(q)):
            raise ContractError("Control targets must be a finite vector")
        q = np.fmod(q, 2.0 * np.pi)
        q.setflags(write=False)
        object.__setattr__(self, "q_hat", q)


def _gains(model: BodyModel, cfg: SimConfig):
    stiffness = model.joint_stiffness
    return cfg.kp * stiffness, cfg.kd * stiffness


def compute_torques(model: BodyModel, state: SimState, target: ControlTarget,
                    cfg: SimConfig) -> np.ndarray:
    """
    PD torques clamp(s * (kp * wrap(q_hat - q) - kd * qdot), +-limit) per axis,
    s being the joint's stiffness scale.

    Raises:
        ContractError: dimensions do not match the model
    """
    state.check_model(model)
    if target.q_hat.shape != state.q.shape:
        raise ContractError(f"Target has {target.q_hat.shape[0]} DOF, state has {state.q.shape[0]}")
    kp, kd = _gains(model, cfg)
    tau = kp * wrap_angle(target.q_hat - state.q) - kd * state.qdot
    limits = model.torque_limits
    return np.clip(tau, -limits, limits)


def _stable_pd_system(model, state, target, cfg, mass_matrix, bias, nu):
    """
    System (A, b, torques) for PD evaluated at the end-of-step velocity:
    (M + dt Kd + dt^2 Kp) v' = M v + dt (Kp err - h); saturated axes
    switch to their limit torque and the system is re-solved.
    """
    dt, bd = cfg.dt, model.base_dof
    kp, kd = _gains(model, cfg)
    err = wrap_angle(target.q_hat - state.q)
    limits = model.torque_limits
    saturated = np.zeros(model.dof_count, dtype=bool)
    applied = np.zeros(model.dof_count)
    for _ in range(SATURATION_PASSES):
        active = ~saturated
        a = mass_matrix.copy()
        b = mass_matrix @ nu - dt * bias
        idx = bd + np.flatnonzero(active)
        a[idx, idx] += dt * kd[active] + dt * dt * kp[active]
        b[idx] += dt * kp[active] * err[active]
        b[bd:] += dt * applied * saturated
        factor = factorize(a)
        v_new = solve(factor, b)
        qdot_new = v_new[bd:]
        tau = kp * (err - dt * qdot_new) - kd * qdot_new
        over = active & (np.abs(tau) > limits)
        if not over.any():
            torques = np.where(saturated, applied, tau)
            return factor, v_new, torques
        saturated |= over
        applied = np.where(over, np.sign(tau) * limits, applied)
    torques = np.where(saturated, applied, np.clip(tau, -limits, limits))
    return factor, v_new, torques


def _momentum_after_impulses(model, terms, nu, cfg, contacts, frames, impulses):
    """
    Linear and world-origin angular momentum the step should end with: the
    start-of-step momentum plus the gravity and contact impulses, applied at
    the start-of-step configuration.
    """
    rows = terms.mass_matrix[:6]
    linear, angular = world_momentum(model, terms.poses, rows, nu)
    weight = model.total_mass * cfg.gravity_vector
    com = model.link_masses @ terms.coms / model.total_mass
    linear = linear + cfg.dt * weight
    angular = angular + cfg.dt * np.cross(com, weight)
    if contacts:
        forces = np.einsum("cij,ci->cj", frames, impulses)
        points = np.stack([c.point for c in contacts])
        linear = linear + forces.sum(axis=0)
        angular = angular + np.cross(points, forces).sum(axis=0)
    return linear, angular


def _advance(model: BodyModel, state: SimState, target: ControlTarget, cfg: SimConfig,
             step_index: int):
    dt, bd = cfg.dt, model.base_dof
    terms = dynamics_terms(model, state, cfg.gravity_vector)
    nu = generalized_velocity(model, state)
    if cfg.pd_mode == PDMode.STABLE:
        if target.q_hat.shape != state.q.shape:
            raise ContractError(f"Target has {target.q_hat.shape[0]} DOF, state has {state.q.shape[0]}")
        factor, v_free, _ = _stable_pd_system(model, state, target, cfg, terms.mass_matrix, terms.bias, nu)
    else:
        tau = compute_torques(model, state, target, cfg)
        force = -terms.bias
        force[bd:] += tau
        factor = factorize(terms.mass_matrix)
        v_free = nu + dt * solve(factor, force)

    contacts = collect_contacts(model, terms.poses, cfg.ground, cfg.static_boxes, cfg.contact_margin)
    impulses = np.zeros((0, 3))
    frames = np.zeros((0, 3, 3))
    velocity = v_free
    if contacts:
        points = np.stack([c.point for c in contacts])
        links = np.array([c.link for c in contacts])
        frames = contact_frames(contacts)
        jac = np.einsum("cij,cjn->cin", frames, point_jacobians(model, terms.poses, points, links))
        jac = jac.reshape(-1, model.velocity_dim)
        response = solve(factor, jac.T)
        delassus = jac @ response
        free = jac @ v_free
        distances = np.array([c.distance for c in contacts])
        targets = normal_velocity_targets(distances, dt, cfg.contact_slop, cfg.baumgarte)
        fixed = None
        if cfg.ground.compliant:
            on_ground = np.array([c.obstacle < 0 for c in contacts])
            fixed = np.full(len(contacts), np.nan)
            fixed[on_ground] = compliant_normal_impulses(
                distances[on_ground], free[0::3][on_ground],
                cfg.ground.stiffness, cfg.ground.damping, dt)
        impulses = solve_contacts(delassus, free, targets, cfg.friction,
                                  cfg.contact_solver_iterations, fixed)
        velocity = v_free + response @ impulses.reshape(-1)

    new_state = integrate(model, state, velocity, dt)
    if not model.fixed_base and new_state.is_finite():
        linear, angular = _momentum_after_impulses(model, terms, nu, cfg, contacts, frames, impulses)
        new_state = project_momentum(model, new_state, linear, angular)
    if not new_state.is_finite() or np.max(np.abs(velocity)) > DIVERGENCE_LIMIT:
        raise SimulationDivergedError(step_index, time=step_index * dt)
    record = ContactRecord(step_index, np.array([c.link for c in contacts], dtype=int),
                           impulses[:, 0].copy(), impulses[:, 1:].copy(), cfg.friction)
    return new_state, record


def step(model: BodyModel, state: SimState, target: ControlTarget, cfg: SimConfig,
         step_index: int = 0, contact_log: Optional[List[ContactRecord]] = None) -> SimState:
    """
    Advance one time step: PD torques, gravity and contact impulses, then
    semi-implicit Euler integration with a renormalized base quaternion.
    Free-base models then have their base velocity corrected so linear and
    angular momentum change by exactly the gravity and contact impulses.

    Raises:
        SimulationDivergedError: NaN/Inf or runaway velocities (carries step_index)
    """
    try:
        new_state, record = _advance(model, state, target, cfg, step_index)
    except np.linalg.LinAlgError:
        raise SimulationDivergedError(step_index, time=step_index * cfg.dt)
    if contact_log is not None:
        contact_log.append(record)
    return new_state


def foot_ground_flags(model: BodyModel, state: SimState, cfg: SimConfig) -> np.ndarray:
    """Per-foot flag: a support point of the foot lies within slop + 2 mm of an obstacle."""
    if not model.foot_links:
        return np.zeros(0, dtype=bool)
    poses = link_poses(model, state)
    tolerance = cfg.contact_slop + 0.002
    contacts = collect_contacts(model, poses, cfg.ground, cfg.static_boxes, margin=tolerance)
    touching = {c.link for c in contacts}
    return np.array([link in touching for link in model.foot_links], dtype=bool)


def simulate(model: BodyModel, s0: SimState, controls, duration: float, cfg: SimConfig,
             fps: Optional[float] = None, contact_log: Optional[List[ContactRecord]] = None,
             time_offset: float = 0.0) -> MotionClip:
    """
    Roll out `controls` (a ControlTrajectory or any schedule with duration,
    dof_count and at(t)) from s0 for `duration` seconds.

    Frame k is recorded after round(k / (fps * dt)) steps; fps defaults to the
    simulation rate. Contact flags mark feet touching the ground or a box.

    Raises:
        ContractError: bad duration or controls that do not cover it
        SimulationDivergedError: with the absolute time of the failing step
    """
    s0.check_model(model)
    if not duration > 0:
        raise ContractError("duration must be positive")
    if controls.duration < duration - 1e-9:
        raise ContractError(f"Controls cover {controls.duration} s, rollout needs {duration} s")
    if controls.dof_count != model.dof_count:
        raise ContractError(f"Controls have {controls.dof_count} DOF, model has {model.dof_count}")
    dt = cfg.dt
    fps = fps or 1.0 / dt
    n_steps = int(round(duration / dt))
    n_frames = int(np.floor(duration * fps + 1e-9)) + 1
    record_at = {int(round(k / (fps * dt))): k for k in range(n_frames)}

    states: List[SimState] = []
    state = s0
    for i in range(n_steps + 1):
        if i in record_at:
            states.append(state)
        if i == n_steps:
            break
        target = ControlTarget(controls.at(min(i * dt, controls.duration)))
        try:
            state = step(model, state, target, cfg, step_index=i, contact_log=contact_log)
        except SimulationDivergedError as e:
            raise SimulationDivergedError(e.step, time=time_offset + e.step * dt)
    return clip_from_states(model, states, 1.0 / fps, cfg)


def clip_from_states(model: BodyModel, states: Sequence[SimState], dt: float,
                     cfg: Optional[SimConfig] = None,
                     source: ClipSource = ClipSource.SIMULATED) -> MotionClip:
    """MotionClip with forward-kinematic quantities and contact flags filled in."""
    cfg = cfg or SimConfig()
    joints, landmarks, coms, flags = [], [], [], []
    for s in states:
        fk = forward_kinematics(model, s)
        joints.append(fk.joint_positions)
        landmarks.append(fk.landmark_positions)
        coms.append(fk.com)
        flags.append(foot_ground_flags(model, s, cfg))
    return MotionClip(dt=dt, states=tuple(states), joint_positions=np.stack(joints),
                      com=np.stack(coms), contact_flags=np.stack(flags),
                      landmark_positions=np.stack(landmarks), source=source)


# ==================== Contact detection for metrics ====================

def foot_sample_points(model: BodyModel, samples: int = PRIMITIVE_SURFACE_SAMPLES) -> List[np.ndarray]:
    """Link-frame surface samples of every foot link."""
    out = []
    for link in model.foot_links:
        pts = [sample_surface(p.kind, p.size, n=samples) @ p.rotation.T + p.center
               for p in model.primitives_of_link(link)]
        out.append(np.concatenate(pts))
    return out


def default_contact_threshold(source: ClipSource) -> float:
    return CONTACT_THRESHOLD_KINEMATIC if ClipSource(source) == ClipSource.KINEMATIC else CONTACT_THRESHOLD_DYNAMIC


def detect_foot_contacts(clip: MotionClip, model: BodyModel, plane: GroundPlane,
                         d: Optional[float] = None,
                         n_vertices: int = CONTACT_MIN_VERTICES) -> np.ndarray:
    """
    (frames, feet) booleans: a foot is in contact when at least n_vertices of
    its sampled surface points lie at signed distance <= d from the plane.
    d defaults to 0.005 m for kinematic clips and -0.015 m for simulated ones.
    """
    threshold = default_contact_threshold(clip.source) if d is None else d
    samples = foot_sample_points(model)
    flags = np.zeros((len(clip), len(samples)), dtype=bool)
    for t, state in enumerate(clip.states):
        poses = link_poses(model, state)
        for f, (link, pts) in enumerate(zip(model.foot_links, samples)):
            world = pts @ poses.rotations[link].T + poses.positions[link]
            flags[t, f] = np.count_nonzero(plane.signed_distance(world) <= threshold) >= n_vertices
    logger.debug(f"Foot contacts at d={threshold:+.3f} m: {flags.mean() * 100:.1f}% of foot-frames")
    return flags
