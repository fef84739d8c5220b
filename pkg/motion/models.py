"""
Value types for the PhysMotion pipeline.
Defines characters, simulation states, observations, ground planes and
motion clips. All types are immutable after construction and validate their
invariants in __post_init__.

Conventions: SI units, world-frame base velocities, exponential-map joint
angles, (x, y, z, w) quaternions, 4x4 homogeneous transforms.
"""
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from enums import ClipSource, PrimitiveKind
from exceptions import ContractError, StructureError, ValidationError
from utils.rotations import rotation_between, make_transform
from utils.validators import (
    ensure, validate_inertia, validate_joint_limits, validate_rigid_transform,
    validate_unit_quaternion,
)


def _frozen_array(values, dtype=float, shape: Optional[Tuple] = None, name: str = "array") -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if shape is not None and arr.shape != shape:
        raise ContractError(f"{name} must have shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


# ==================== Body ====================

@dataclass(frozen=True, eq=False)
class Primitive:
    """
    Rigid geometric primitive attached to a link.

    size is (radius, length) for capsules - length is the distance between
    the two hemisphere centres along the local y axis - and (width, height,
    depth) along local x, y, z for boxes. inertia is taken about the
    primitive centre and expressed in link-frame axes.
    """
    kind: PrimitiveKind
    size: Tuple[float, ...]
    transform: np.ndarray
    link: int
    mass: float
    inertia: np.ndarray
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", PrimitiveKind(self.kind))
        object.__setattr__(self, "size", tuple(float(s) for s in self.size))
        expected = 2 if self.kind == PrimitiveKind.CAPSULE else 3
        if len(self.size) != expected:
            raise ValidationError(f"{self.kind.value} needs {expected} size parameters, got {len(self.size)}")
        if any(s <= 0 for s in self.size):
            raise ValidationError(f"Primitive '{self.name}' size parameters must be positive: {self.size}")
        object.__setattr__(self, "transform", _frozen_array(self.transform, shape=(4, 4), name="transform"))
        ensure(validate_rigid_transform(self.transform), context=f"primitive '{self.name}'")
        if not self.mass > 0:
            raise ValidationError(f"Primitive '{self.name}' mass must be positive")
        object.__setattr__(self, "inertia", _frozen_array(self.inertia, shape=(3, 3), name="inertia"))
        ensure(validate_inertia(self.inertia), context=f"primitive '{self.name}'")

    @property
    def center(self) -> np.ndarray:
        """Geometric centre (= centre of mass) in the link frame."""
        return self.transform[:3, 3]

    @property
    def rotation(self) -> np.ndarray:
        return self.transform[:3, :3]

    @property
    def inertia_about_link_origin(self) -> np.ndarray:
        c = self.center
        return self.inertia + self.mass * (np.dot(c, c) * np.eye(3) - np.outer(c, c))


@dataclass(frozen=True, eq=False)
class JointSpec:
    """Spherical joint between parent and child links (three actuated axes)."""
    parent: int
    child: int
    frame_in_parent: np.ndarray
    frame_in_child: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    torque_limit: np.ndarray
    stiffness: float = 1.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "frame_in_parent", _frozen_array(self.frame_in_parent, shape=(4, 4), name="frame_in_parent"))
        object.__setattr__(self, "frame_in_child", _frozen_array(self.frame_in_child, shape=(4, 4), name="frame_in_child"))
        ensure(validate_rigid_transform(self.frame_in_parent), context=f"joint '{self.name}' parent frame")
        ensure(validate_rigid_transform(self.frame_in_child), context=f"joint '{self.name}' child frame")
        object.__setattr__(self, "lower", _frozen_array(self.lower, shape=(3,), name="lower"))
        object.__setattr__(self, "upper", _frozen_array(self.upper, shape=(3,), name="upper"))
        ensure(validate_joint_limits(self.lower, self.upper), context=f"joint '{self.name}'")
        object.__setattr__(self, "torque_limit", _frozen_array(self.torque_limit, shape=(3,), name="torque_limit"))
        if np.any(self.torque_limit <= 0):
            raise ValidationError(f"Joint '{self.name}' torque limits must be positive")
        if not self.stiffness > 0:
            raise ValidationError(f"Joint '{self.name}' stiffness must be positive")
        if self.parent == self.child:
            raise StructureError(f"Joint '{self.name}' connects link {self.parent} to itself")


@dataclass(frozen=True, eq=False)
class LandmarkAttachment:
    """A named surface landmark rigidly attached to a link."""
    link: int
    offset: np.ndarray
    name: str

    def __post_init__(self):
        object.__setattr__(self, "offset", _frozen_array(self.offset, shape=(3,), name="offset"))


@dataclass(frozen=True, eq=False)
class BodyModel:
    """
    Articulated character: primitives on links connected by spherical joints.

    Links are numbered 0..n_links-1 and every link carries at least one
    primitive. The base link is either free-floating (6 DOF) or welded to
    the world when fixed_base is set.
    """
    primitives: Tuple[Primitive, ...]
    joints: Tuple[JointSpec, ...]
    base_link: int = 0
    landmarks: Tuple[LandmarkAttachment, ...] = ()
    link_names: Tuple[str, ...] = ()
    foot_links: Tuple[int, ...] = ()
    fixed_base: bool = False

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "landmarks", tuple(self.landmarks))
        object.__setattr__(self, "foot_links", tuple(self.foot_links))
        n_links = len(self.joints) + 1
        if not self.link_names:
            object.__setattr__(self, "link_names", tuple(f"link{i}" for i in range(n_links)))
        object.__setattr__(self, "link_names", tuple(self.link_names))
        if len(self.link_names) != n_links:
            raise StructureError(f"{len(self.link_names)} link names for {n_links} links")
        if not 0 <= self.base_link < n_links:
            raise StructureError(f"base_link {self.base_link} out of range")
        # Touch the traversal to validate the tree eagerly
        _ = self.traversal
        for p in self.primitives:
            if not 0 <= p.link < n_links:
                raise StructureError(f"Primitive '{p.name}' references missing link {p.link}")
        for lm in self.landmarks:
            if not 0 <= lm.link < n_links:
                raise ValidationError(f"Landmark '{lm.name}' references missing link {lm.link}")
        for link in self.foot_links:
            if not 0 <= link < n_links:
                raise ValidationError(f"Foot link {link} out of range")
        masses = self.link_masses
        if np.any(masses <= 0):
            missing = [self.link_names[i] for i in np.flatnonzero(masses <= 0)]
            raise ValidationError(f"Links without mass: {', '.join(missing)}")

    # ---------- topology ----------

    @property
    def n_links(self) -> int:
        return len(self.joints) + 1

    @property
    def dof_count(self) -> int:
        """Actuated DOF: three per spherical joint."""
        return 3 * len(self.joints)

    @property
    def base_dof(self) -> int:
        return 0 if self.fixed_base else 6

    @property
    def velocity_dim(self) -> int:
        return self.base_dof + self.dof_count

    @cached_property
    def joint_of_link(self) -> Dict[int, int]:
        """Map child link -> index of the joint that drives it."""
        return {j.child: k for k, j in enumerate(self.joints)}

    @cached_property
    def parent_of_link(self) -> Dict[int, int]:
        return {j.child: j.parent for j in self.joints}

    @cached_property
    def traversal(self) -> Tuple[int, ...]:
        """Joint indices ordered so every parent link is visited before its children."""
        n_links = len(self.joints) + 1
        children: Dict[int, List[int]] = {i: [] for i in range(n_links)}
        seen_children = set()
        for k, j in enumerate(self.joints):
            for link in (j.parent, j.child):
                if not 0 <= link < n_links:
                    raise StructureError(f"Joint '{j.name}' references missing link {link}")
            if j.child in seen_children:
                raise StructureError(f"Link {j.child} has more than one parent joint")
            if j.child == self.base_link:
                raise StructureError("The base link cannot be a joint child")
            seen_children.add(j.child)
            children[j.parent].append(k)
        order: List[int] = []
        frontier = [self.base_link]
        while frontier:
            link = frontier.pop(0)
            for k in children[link]:
                order.append(k)
                frontier.append(self.joints[k].child)
        if len(order) != len(self.joints):
            raise StructureError("Joint graph is not a tree connected to the base link")
        return tuple(order)

    @cached_property
    def ancestor_joints(self) -> Dict[int, Tuple[int, ...]]:
        """For every link, the joints on the path from the base (root first)."""
        out: Dict[int, Tuple[int, ...]] = {self.base_link: ()}
        for k in self.traversal:
            j = self.joints[k]
            out[j.child] = out[j.parent] + (k,)
        return out

    def dof_slice(self, joint_index: int) -> slice:
        """Columns of joint `joint_index` inside a generalized velocity vector."""
        start = self.base_dof + 3 * joint_index
        return slice(start, start + 3)

    def link_index(self, name: str) -> int:
        try:
            return self.link_names.index(name)
        except ValueError:
            raise ContractError(f"Unknown link '{name}'")

    @cached_property
    def ancestor_mask(self) -> np.ndarray:
        """(links, joints) boolean: joint k lies on the path from the base to link l."""
        mask = np.zeros((self.n_links, len(self.joints)), dtype=bool)
        for link, chain in self.ancestor_joints.items():
            mask[link, list(chain)] = True
        return mask

    @cached_property
    def ankle_joints(self) -> Tuple[int, ...]:
        """Joints driving the foot links (the 'foot joint' of the footskate metric)."""
        return tuple(self.joint_of_link[link] for link in self.foot_links)

    # ---------- mass properties ----------

    @cached_property
    def link_masses(self) -> np.ndarray:
        m = np.zeros(self.n_links)
        for p in self.primitives:
            m[p.link] += p.mass
        return m

    @cached_property
    def link_coms(self) -> np.ndarray:
        """Centre of mass of every link, in its link frame."""
        acc = np.zeros((self.n_links, 3))
        for p in self.primitives:
            acc[p.link] += p.mass * p.center
        masses = self.link_masses
        safe = np.where(masses > 0, masses, 1.0)
        return acc / safe[:, None]

    @cached_property
    def link_inertias(self) -> np.ndarray:
        """Rotational inertia of every link about its COM, link-frame axes."""
        out = np.zeros((self.n_links, 3, 3))
        coms = self.link_coms
        for p in self.primitives:
            d = p.center - coms[p.link]
            out[p.link] += p.inertia + p.mass * (np.dot(d, d) * np.eye(3) - np.outer(d, d))
        return out

    @property
    def total_mass(self) -> float:
        return float(self.link_masses.sum())

    @cached_property
    def lower_limits(self) -> np.ndarray:
        return np.concatenate([j.lower for j in self.joints]) if self.joints else np.zeros(0)

    @cached_property
    def upper_limits(self) -> np.ndarray:
        return np.concatenate([j.upper for j in self.joints]) if self.joints else np.zeros(0)

    @cached_property
    def torque_limits(self) -> np.ndarray:
        return np.concatenate([j.torque_limit for j in self.joints]) if self.joints else np.zeros(0)

    @cached_property
    def joint_stiffness(self) -> np.ndarray:
        """Per-DOF stiffness scale (three equal entries per joint)."""
        return np.repeat([j.stiffness for j in self.joints], 3) if self.joints else np.zeros(0)

    @property
    def landmark_ids(self) -> Tuple[str, ...]:
        return tuple(lm.name for lm in self.landmarks)

    def primitives_of_link(self, link: int) -> List[Primitive]:
        return [p for p in self.primitives if p.link == link]


# ==================== State ====================

@dataclass(frozen=True, eq=False)
class SimState:
    """
    Generalized coordinates and velocities at one instant.

    base_lin_vel / base_ang_vel are world-frame. qdot holds, per joint, the
    angular velocity of the child side relative to the parent side expressed
    in the rotated joint frame.
    """
    base_position: np.ndarray
    base_orientation: np.ndarray
    q: np.ndarray
    base_lin_vel: np.ndarray
    base_ang_vel: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base_position", _frozen_array(self.base_position, shape=(3,), name="base_position"))
        object.__setattr__(self, "base_orientation", _frozen_array(self.base_orientation, shape=(4,), name="base_orientation"))
        ensure(validate_unit_quaternion(self.base_orientation), context="base_orientation")
        object.__setattr__(self, "q", _frozen_array(self.q, name="q"))
        object.__setattr__(self, "qdot", _frozen_array(self.qdot, name="qdot"))
        object.__setattr__(self, "base_lin_vel", _frozen_array(self.base_lin_vel, shape=(3,), name="base_lin_vel"))
        object.__setattr__(self, "base_ang_vel", _frozen_array(self.base_ang_vel, shape=(3,), name="base_ang_vel"))
        if self.q.ndim != 1 or self.q.shape != self.qdot.shape:
            raise ContractError(f"q and qdot must be equal-length vectors, got {self.q.shape} and {self.qdot.shape}")

    @classmethod
    def rest(cls, model: "BodyModel", base_position=(0.0, 0.0, 0.0)) -> "SimState":
        """Zero pose, identity orientation, at rest."""
        n = model.dof_count
        return cls(np.asarray(base_position, dtype=float), np.array([0.0, 0.0, 0.0, 1.0]),
                   np.zeros(n), np.zeros(3), np.zeros(3), np.zeros(n))

    @property
    def dof_count(self) -> int:
        return self.q.shape[0]

    def check_model(self, model: BodyModel) -> None:
        if self.dof_count != model.dof_count:
            raise ContractError(f"State has {self.dof_count} joint DOF, model has {model.dof_count}")

    def replace(self, **changes) -> "SimState":
        return replace(self, **changes)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (
            self.base_position, self.base_orientation, self.q,
            self.base_lin_vel, self.base_ang_vel, self.qdot))


# ==================== Observations ====================

@dataclass(frozen=True, eq=False)
class ObservationFrame:
    """One frame of kinematic evidence."""
    kinematic_pose: SimState
    landmarks_2d: np.ndarray
    landmark_scores: np.ndarray
    visibility: np.ndarray
    raw_kinematic_pose: Optional[SimState] = None

    def __post_init__(self):
        object.__setattr__(self, "landmarks_2d", _frozen_array(self.landmarks_2d, name="landmarks_2d"))
        object.__setattr__(self, "landmark_scores", _frozen_array(self.landmark_scores, name="landmark_scores"))
        object.__setattr__(self, "visibility", _frozen_array(self.visibility, dtype=bool, name="visibility"))
        n = self.landmark_scores.shape[0]
        if self.landmarks_2d.shape != (n, 2) or self.visibility.shape != (n,):
            raise ValidationError("landmarks_2d, landmark_scores and visibility disagree on the landmark count")
        if np.any(self.landmark_scores < 0):
            raise ValidationError("landmark_scores must be non-negative")

    @property
    def effective_scores(self) -> np.ndarray:
        """Scores with invisible landmarks zeroed."""
        return np.where(self.visibility, self.landmark_scores, 0.0)


@dataclass(frozen=True, eq=False)
class ObservationSequence:
    """Per-frame kinematic poses and 2D landmark detections with a camera."""
    fps: float
    frames: Tuple[ObservationFrame, ...]
    camera: np.ndarray
    landmark_ids: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "landmark_ids", tuple(self.landmark_ids))
        object.__setattr__(self, "camera", _frozen_array(self.camera, shape=(3, 4), name="camera"))
        if not self.fps > 0:
            raise ValidationError("fps must be positive")
        if not self.frames:
            raise ValidationError("Observation sequence has no frames")
        n = len(self.landmark_ids)
        for i, f in enumerate(self.frames):
            if f.landmark_scores.shape[0] != n:
                raise ValidationError(
                    f"frame {i} has {f.landmark_scores.shape[0]} landmarks, expected {n}")
        dofs = {f.kinematic_pose.dof_count for f in self.frames}
        if len(dofs) != 1:
            raise ValidationError("Kinematic poses disagree on the joint count")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def duration(self) -> float:
        return (len(self.frames) - 1) / self.fps

    @property
    def kinematic_poses(self) -> List[SimState]:
        return [f.kinematic_pose for f in self.frames]

    def landmarks(self) -> np.ndarray:
        return np.stack([f.landmarks_2d for f in self.frames])

    def scores(self) -> np.ndarray:
        return np.stack([f.effective_scores for f in self.frames])

    def slice(self, start: int, stop: int) -> "ObservationSequence":
        """Frames [start, stop) as a new sequence."""
        if not 0 <= start < stop <= len(self.frames):
            raise ContractError(f"Invalid frame range [{start}, {stop}) for {len(self.frames)} frames")
        return replace(self, frames=self.frames[start:stop])


# ==================== Ground ====================

@dataclass(frozen=True, eq=False)
class GroundPlane:
    """
    Ground plane as the transform T_g from world to the canonical frame whose
    y axis is the plane normal through the origin. stiffness/damping, when
    set, make the floor compliant.
    """
    transform: np.ndarray = field(default_factory=lambda: np.eye(4))
    friction: float = 0.9
    stiffness: Optional[float] = None
    damping: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "transform", _frozen_array(self.transform, shape=(4, 4), name="transform"))
        ensure(validate_rigid_transform(self.transform), context="ground transform")
        if self.friction < 0:
            raise ValidationError("friction must be non-negative")
        if (self.stiffness is None) != (self.damping is None):
            raise ValidationError("stiffness and damping must be given together")
        if self.stiffness is not None and (self.stiffness <= 0 or self.damping < 0):
            raise ValidationError("stiffness must be positive and damping non-negative")

    @classmethod
    def from_normal_offset(cls, normal, offset: float, **kwargs) -> "GroundPlane":
        """Plane {p : n.p + offset = 0}; the signed distance is n.p + offset."""
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        rot = rotation_between(n, np.array([0.0, 1.0, 0.0]))
        return cls(make_transform(rot, np.array([0.0, offset, 0.0])), **kwargs)

    @property
    def normal(self) -> np.ndarray:
        """Unit normal in world coordinates."""
        return self.transform[1, :3]

    @property
    def offset(self) -> float:
        return float(self.transform[1, 3])

    @property
    def compliant(self) -> bool:
        return self.stiffness is not None

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.normal + self.offset


@dataclass(frozen=True, eq=False)
class StaticBox:
    """Fixed box obstacle in the scene (e.g. a chair seat)."""
    transform: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "transform", _frozen_array(self.transform, shape=(4, 4), name="transform"))
        ensure(validate_rigid_transform(self.transform), context="static box")
        object.__setattr__(self, "half_extents", _frozen_array(self.half_extents, shape=(3,), name="half_extents"))
        if np.any(self.half_extents <= 0):
            raise ValidationError("Static box half extents must be positive")


# ==================== Motion ====================

@dataclass(frozen=True, eq=False)
class MotionClip:
    """
    Time series of states with derived quantities.

    joint_positions[t, 0] is the base origin; joint_positions[t, k + 1] is
    the centre of joint k.
    """
    dt: float
    states: Tuple[SimState, ...]
    joint_positions: np.ndarray
    com: np.ndarray
    contact_flags: np.ndarray
    landmark_positions: np.ndarray
    source: ClipSource = ClipSource.SIMULATED

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "source", ClipSource(self.source))
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        t = len(self.states)
        if t == 0:
            raise ValidationError("Motion clip has no states")
        object.__setattr__(self, "joint_positions", _frozen_array(self.joint_positions, name="joint_positions"))
        object.__setattr__(self, "com", _frozen_array(self.com, shape=(t, 3), name="com"))
        object.__setattr__(self, "contact_flags", _frozen_array(self.contact_flags, dtype=bool, name="contact_flags"))
        object.__setattr__(self, "landmark_positions", _frozen_array(self.landmark_positions, name="landmark_positions"))
        if self.joint_positions.ndim != 3 or self.joint_positions.shape[0] != t:
            raise ValidationError("joint_positions must be (frames, joints, 3)")
        if self.contact_flags.shape[0] != t or self.landmark_positions.shape[0] != t:
            raise ValidationError("Per-frame arrays disagree on the frame count")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def fps(self) -> float:
        return 1.0 / self.dt

    @property
    def duration(self) -> float:
        return (len(self.states) - 1) * self.dt

    def poses(self) -> np.ndarray:
        """(frames, dof) joint angles."""
        return np.stack([s.q for s in self.states])
