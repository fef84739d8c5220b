"""
File schemas for the PhysMotion pipeline.
Pydantic models describing every on-disk document: observations, body
models, motion clips, controls, planes, scenes, priors and run configs.
See docs/FILE_FORMATS.md for the human-readable description.
"""
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import (
    CMA_ITERATIONS, CMA_POPULATION, CMA_SIGMA0, CONTACT_ITERATIONS, CONTACT_SLOP,
    FRICTION, GRAVITY, KD, KNOT_INTERVAL, KP, PLANE_DELTA, PLANE_K, SIM_RATE_HZ,
    WINDOW_LENGTH, WINDOW_OVERLAP,
)
from enums import ClipSource, PDMode, PrimitiveKind, WindowMode

SCHEMA_VERSION = 1

Vector3 = List[float]
Matrix = List[List[float]]


def _check_matrix(value: Matrix, rows: int, cols: int, name: str) -> Matrix:
    if len(value) != rows or any(len(r) != cols for r in value):
        raise ValueError(f"{name} must be {rows}x{cols}")
    return value


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int = SCHEMA_VERSION
    units: Literal["SI"] = "SI"

    @field_validator("version")
    @classmethod
    def _known_version(cls, v: int) -> int:
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {v}")
        return v


# ==================== State & Observations ====================

class StateSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    base_position: Vector3
    base_orientation: List[float]
    q: List[float]
    base_lin_vel: Vector3
    base_ang_vel: Vector3
    qdot: List[float]

    @model_validator(mode="after")
    def _shapes(self):
        for name in ("base_position", "base_lin_vel", "base_ang_vel"):
            if len(getattr(self, name)) != 3:
                raise ValueError(f"{name} must have 3 components")
        if len(self.base_orientation) != 4:
            raise ValueError("base_orientation must have 4 components")
        if len(self.q) != len(self.qdot):
            raise ValueError("q and qdot must have equal length")
        return self


class FrameSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kinematic_pose: StateSchema
    landmarks_2d: Matrix
    landmark_scores: List[float]
    landmark_visibility: Optional[List[bool]] = None
    raw_kinematic_pose: Optional[StateSchema] = None

    @field_validator("landmark_scores")
    @classmethod
    def _non_negative(cls, v: List[float]) -> List[float]:
        if any(s < 0 for s in v):
            raise ValueError("scores must be non-negative")
        return v


class ObservationFileSchema(_Document):
    fps: float = Field(gt=0)
    camera: Matrix
    landmark_ids: List[str]
    frames: List[FrameSchema] = Field(min_length=1)

    @field_validator("camera")
    @classmethod
    def _camera_shape(cls, v: Matrix) -> Matrix:
        return _check_matrix(v, 3, 4, "camera")


# ==================== Body ====================

class PrimitiveSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = ""
    kind: PrimitiveKind
    size: List[float]
    transform: Matrix
    link: int
    mass: float = Field(gt=0)
    inertia: Matrix


class JointSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = ""
    parent: int
    child: int
    frame_in_parent: Matrix
    frame_in_child: Matrix
    lower: Vector3
    upper: Vector3
    torque_limit: Vector3
    stiffness: float = Field(default=1.0, gt=0)


class LandmarkSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    link: int
    offset: Vector3


class BodyFileSchema(_Document):
    link_names: List[str]
    base_link: int = 0
    fixed_base: bool = False
    foot_links: List[int] = Field(default_factory=list)
    primitives: List[PrimitiveSchema]
    joints: List[JointSchema]
    landmarks: List[LandmarkSchema] = Field(default_factory=list)


class LinkPointsSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    link: str
    kind: PrimitiveKind = PrimitiveKind.CAPSULE
    points: Matrix


class PointSetsFileSchema(_Document):
    links: List[LinkPointsSchema]


class TopologyJointSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = ""
    parent: str
    child: str
    center: Vector3                      # joint centre in world rest pose
    lower: Vector3
    upper: Vector3
    torque_limit: Vector3
    stiffness: float = Field(default=1.0, gt=0)


class TopologyLandmarkSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    link: str
    position: Vector3                    # world rest pose


class TopologyFileSchema(_Document):
    """Joint tree in a world rest pose; child link frames sit at joint centres."""
    base_link: str
    base_origin: Vector3 = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    joints: List[TopologyJointSchema]
    mass_fractions: Dict[str, float] = Field(default_factory=dict)
    foot_links: List[str] = Field(default_factory=list)
    landmarks: List[TopologyLandmarkSchema] = Field(default_factory=list)


# ==================== Motion ====================

class MotionClipFileSchema(_Document):
    dt: float = Field(gt=0)
    source: ClipSource = ClipSource.SIMULATED
    states: List[StateSchema] = Field(min_length=1)
    joint_positions: List[Matrix]
    com: Matrix
    contact_flags: List[List[bool]]
    landmark_positions: List[Matrix]


class ControlsFileSchema(_Document):
    knot_interval: float = Field(gt=0)
    duration: float = Field(gt=0)
    start_time: float = 0.0
    coefficients: Matrix


class StaticBoxSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    transform: Matrix
    half_extents: Vector3


class PlaneFileSchema(_Document):
    transform: Matrix
    friction: float = Field(default=FRICTION, ge=0)
    stiffness: Optional[float] = None
    damping: Optional[float] = None
    normal: Optional[Vector3] = None
    offset: Optional[float] = None
    loss: Optional[float] = None
    identifiable: bool = True
    converged: bool = True

    @field_validator("transform")
    @classmethod
    def _transform_shape(cls, v: Matrix) -> Matrix:
        return _check_matrix(v, 4, 4, "transform")


class SceneFileSchema(_Document):
    plane: PlaneFileSchema
    static_boxes: List[StaticBoxSchema] = Field(default_factory=list)


class PriorFileSchema(_Document):
    rest: List[float]
    weights: Matrix


# ==================== Run configuration ====================

class SimSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rate_hz: float = Field(default=SIM_RATE_HZ, gt=0)
    gravity: float = GRAVITY
    friction: float = Field(default=FRICTION, ge=0)
    kp: float = Field(default=KP, ge=0)
    kd: float = Field(default=KD, ge=0)
    pd_mode: PDMode = PDMode.STABLE
    contact_solver_iterations: int = Field(default=CONTACT_ITERATIONS, ge=1)
    contact_slop: float = Field(default=CONTACT_SLOP, ge=0)
    self_collision: bool = False


class WeightsSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    w_com: float = Field(default=15.0, ge=0)
    w_pose: float = Field(default=0.5, ge=0)
    w_2d: float = Field(default=4.0, ge=0)
    w_nf: float = Field(default=1.0, ge=0)
    w_tv: float = Field(default=1.0, ge=0)
    w_lim: float = Field(default=1.0, ge=0)


class CmaSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    population: Optional[int] = Field(default=CMA_POPULATION, ge=4)
    iterations: int = Field(default=CMA_ITERATIONS, ge=0)
    sigma0: float = Field(default=CMA_SIGMA0, gt=0)
    restarts: bool = False


class WindowsSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    length: float = Field(default=WINDOW_LENGTH, gt=0)
    overlap: float = Field(default=WINDOW_OVERLAP, ge=0)
    mode: WindowMode = WindowMode.SEQUENTIAL
    knot_interval: float = Field(default=KNOT_INTERVAL, gt=0)

    @model_validator(mode="after")
    def _overlap_below_length(self):
        if self.overlap >= self.length:
            raise ValueError("overlap must be shorter than the window length")
        return self


class PlaneSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    k: int = Field(default=PLANE_K, ge=1)
    delta: float = Field(default=PLANE_DELTA, gt=0)
    stiffness: Optional[float] = None
    damping: Optional[float] = None


class RefineSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    w_2d: float = Field(default=1.0, ge=0)
    w_temporal: float = Field(default=1.0, ge=0)
    w_ground: float = Field(default=1.0, ge=0)
    max_iterations: int = Field(default=50, ge=0)


class RunConfigSchema(BaseModel):
    """Sections mirror SimConfig, ObjectiveWeights, CmaConfig and WindowPlan."""
    model_config = ConfigDict(extra="forbid")

    sim: SimSection = Field(default_factory=SimSection)
    weights: WeightsSection = Field(default_factory=WeightsSection)
    cma: CmaSection = Field(default_factory=CmaSection)
    windows: WindowsSection = Field(default_factory=WindowsSection)
    plane: PlaneSection = Field(default_factory=PlaneSection)
    refine: RefineSection = Field(default_factory=RefineSection)
    body: Optional[str] = None
    observations: Optional[str] = None
    ground_truth: Optional[str] = None
    plane_file: Optional[str] = None
    prior: Optional[str] = None
