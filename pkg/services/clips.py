"""
Motion clip helpers for the PhysMotion pipeline.
Turns kinematic observations into clips and states with finite-difference
velocities, and slices and joins clips along the time axis.
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np

from enums import ClipSource
from exceptions import ContractError
from motion.models import BodyModel, GroundPlane, MotionClip, ObservationSequence, SimState
from services.simulator import SimConfig, clip_from_states
from utils.rotations import matrix_to_exp_map, quat_to_matrix, exp_map_to_matrix


def _neighbours(n: int, t: int) -> Tuple[int, int, float]:
    """Frames and frame distance of the finite-difference stencil at t."""
    if n < 2:
        return t, t, 1.0
    if t == 0:
        return 0, 1, 1.0
    if t == n - 1:
        return n - 2, n - 1, 1.0
    return t - 1, t + 1, 2.0


def state_velocities(states: Sequence[SimState], t: int, fps: float) -> SimState:
    """
    State t with velocities from central differences of the trajectory
    (one-sided at the ends): base linear and world angular velocity, and
    joint rates log(R_a^T R_b) / dt on the child side.
    """
    n = len(states)
    a, b, span = _neighbours(n, t)
    state = states[t]
    if a == b:
        zeros = np.zeros(state.dof_count)
        return state.replace(base_lin_vel=np.zeros(3), base_ang_vel=np.zeros(3), qdot=zeros)
    h = span / fps
    sa, sb = states[a], states[b]
    lin = (sb.base_position - sa.base_position) / h
    ang = matrix_to_exp_map(quat_to_matrix(sb.base_orientation) @ quat_to_matrix(sa.base_orientation).T) / h
    if state.dof_count:
        ra = exp_map_to_matrix(sa.q.reshape(-1, 3)).reshape(-1, 3, 3)
        rb = exp_map_to_matrix(sb.q.reshape(-1, 3)).reshape(-1, 3, 3)
        qdot = matrix_to_exp_map(ra.transpose(0, 2, 1) @ rb).reshape(-1) / h
    else:
        qdot = np.zeros(0)
    return state.replace(base_lin_vel=lin, base_ang_vel=ang, qdot=qdot)


def kinematic_state(obs: ObservationSequence, frame: int) -> SimState:
    """Kinematic pose at `frame` with finite-difference velocities."""
    if not 0 <= frame < len(obs):
        raise ContractError(f"Frame {frame} outside the {len(obs)}-frame sequence")
    return state_velocities(obs.kinematic_poses, frame, obs.fps)


def clip_from_observations(model: BodyModel, obs: ObservationSequence,
                           plane: Optional[GroundPlane] = None) -> MotionClip:
    """MotionClip of the kinematic poses (source = kinematic)."""
    states = [kinematic_state(obs, t) for t in range(len(obs))]
    cfg = SimConfig(ground=plane or GroundPlane())
    return clip_from_states(model, states, 1.0 / obs.fps, cfg, source=ClipSource.KINEMATIC)


def slice_clip(clip: MotionClip, start: int, stop: int) -> MotionClip:
    """Frames [start, stop) of a clip."""
    if not 0 <= start < stop <= len(clip):
        raise ContractError(f"Invalid frame range [{start}, {stop}) for {len(clip)} frames")
    return MotionClip(dt=clip.dt, states=clip.states[start:stop],
                      joint_positions=clip.joint_positions[start:stop], com=clip.com[start:stop],
                      contact_flags=clip.contact_flags[start:stop],
                      landmark_positions=clip.landmark_positions[start:stop], source=clip.source)


def concatenate_clips(pieces: List[MotionClip]) -> MotionClip:
    """Join clips end to end; all pieces must share dt and source."""
    if not pieces:
        raise ContractError("Nothing to concatenate")
    first = pieces[0]
    if any(abs(p.dt - first.dt) > 1e-12 for p in pieces):
        raise ContractError("Clips disagree on the frame interval")
    return MotionClip(
        dt=first.dt,
        states=tuple(s for p in pieces for s in p.states),
        joint_positions=np.concatenate([p.joint_positions for p in pieces]),
        com=np.concatenate([p.com for p in pieces]),
        contact_flags=np.concatenate([p.contact_flags for p in pieces]),
        landmark_positions=np.concatenate([p.landmark_positions for p in pieces]),
        source=first.source,
    )
