"""
File operations for the PhysMotion pipeline.
Loads and saves every on-disk document and converts between the pydantic
file schemas and the immutable value types.

Documents are written in a canonical form (sorted keys, two-space indent,
shortest round-tripping float repr) so save(load(x)) is byte-stable.
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from enums import ClipSource, PrimitiveKind
from exceptions import ContractError, SchemaError
from motion.models import (
    BodyModel, GroundPlane, JointSpec, LandmarkAttachment, MotionClip,
    ObservationFrame, ObservationSequence, Primitive, SimState, StaticBox,
)
from motion.schemas import (
    BodyFileSchema, ControlsFileSchema, MotionClipFileSchema, ObservationFileSchema,
    PlaneFileSchema, PointSetsFileSchema, PriorFileSchema, RunConfigSchema,
    SceneFileSchema, StateSchema, TopologyFileSchema,
)
from utils.logger import logger

PathLike = Union[str, Path]
S = TypeVar("S", bound=BaseModel)


# ==================== Document helpers ====================

def _field_path(loc) -> str:
    return ".".join(str(part) for part in loc)


def read_document(path: PathLike, schema: Type[S]) -> S:
    """
    Parse a JSON file against a schema.

    Raises:
        ContractError: the file does not exist
        SchemaError: invalid JSON or a schema violation (names the field)
    """
    path = Path(path)
    if not path.is_file():
        raise ContractError(f"File not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}", field=str(path))
    try:
        return schema.model_validate(raw)
    except PydanticValidationError as e:
        first = e.errors()[0]
        raise SchemaError(first["msg"], field=_field_path(first["loc"]) or schema.__name__)


def canonical_json(document: Union[BaseModel, Dict[str, Any]]) -> str:
    """Canonical text of a document: sorted keys, indent 2, trailing newline."""
    if isinstance(document, BaseModel):
        document = document.model_dump(mode="json", exclude_none=True)
    try:
        return json.dumps(document, indent=2, sort_keys=True, allow_nan=False) + "\n"
    except ValueError:
        raise ContractError("Documents cannot contain NaN or Inf values")


def write_document(path: PathLike, document: Union[BaseModel, Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(document), encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path


def _matrix(values: np.ndarray) -> List:
    return np.asarray(values, dtype=float).tolist()


# ==================== States ====================

def state_to_schema(state: SimState) -> StateSchema:
    return StateSchema(
        base_position=_matrix(state.base_position),
        base_orientation=_matrix(state.base_orientation),
        q=_matrix(state.q),
        base_lin_vel=_matrix(state.base_lin_vel),
        base_ang_vel=_matrix(state.base_ang_vel),
        qdot=_matrix(state.qdot),
    )


def state_from_schema(doc: StateSchema) -> SimState:
    return SimState(
        base_position=doc.base_position,
        base_orientation=doc.base_orientation,
        q=doc.q,
        base_lin_vel=doc.base_lin_vel,
        base_ang_vel=doc.base_ang_vel,
        qdot=doc.qdot,
    )


# ==================== Observations ====================

def observations_from_schema(doc: ObservationFileSchema) -> ObservationSequence:
    frames = []
    for frame in doc.frames:
        n = len(frame.landmark_scores)
        visibility = frame.landmark_visibility if frame.landmark_visibility is not None else [True] * n
        frames.append(ObservationFrame(
            kinematic_pose=state_from_schema(frame.kinematic_pose),
            landmarks_2d=np.asarray(frame.landmarks_2d, dtype=float).reshape(-1, 2) if n else np.zeros((0, 2)),
            landmark_scores=frame.landmark_scores,
            visibility=visibility,
            raw_kinematic_pose=(state_from_schema(frame.raw_kinematic_pose)
                                if frame.raw_kinematic_pose is not None else None),
        ))
    return ObservationSequence(fps=doc.fps, frames=frames, camera=doc.camera,
                               landmark_ids=doc.landmark_ids)


def observations_to_schema(obs: ObservationSequence) -> ObservationFileSchema:
    frames = []
    for f in obs.frames:
        frames.append({
            "kinematic_pose": state_to_schema(f.kinematic_pose),
            "landmarks_2d": _matrix(f.landmarks_2d),
            "landmark_scores": _matrix(f.landmark_scores),
            "landmark_visibility": [bool(v) for v in f.visibility],
            "raw_kinematic_pose": (state_to_schema(f.raw_kinematic_pose)
                                   if f.raw_kinematic_pose is not None else None),
        })
    return ObservationFileSchema(fps=obs.fps, camera=_matrix(obs.camera),
                                 landmark_ids=list(obs.landmark_ids), frames=frames)


def load_observations(path: PathLike) -> ObservationSequence:
    """
    Load and validate an observation file.

    Raises:
        SchemaError: malformed file (message names the offending field)
        ValidationError: frames disagree on the landmark count
    """
    obs = observations_from_schema(read_document(path, ObservationFileSchema))
    logger.info(f"Loaded {len(obs)} observation frames at {obs.fps:g} fps from {path}")
    return obs


def save_observations(path: PathLike, obs: ObservationSequence) -> Path:
    return write_document(path, observations_to_schema(obs))


def downsample(obs: ObservationSequence, factor: int) -> ObservationSequence:
    """Keep every `factor`-th frame (e.g. 50 -> 25 fps with factor 2)."""
    if int(factor) != factor or factor < 1:
        raise ContractError(f"Downsampling factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return obs
    return ObservationSequence(fps=obs.fps / factor, frames=obs.frames[::factor],
                               camera=obs.camera, landmark_ids=obs.landmark_ids)


# ==================== Body ====================

def body_to_schema(model: BodyModel) -> BodyFileSchema:
    return BodyFileSchema(
        link_names=list(model.link_names),
        base_link=model.base_link,
        fixed_base=model.fixed_base,
        foot_links=list(model.foot_links),
        primitives=[{
            "name": p.name, "kind": p.kind, "size": list(p.size),
            "transform": _matrix(p.transform), "link": p.link,
            "mass": p.mass, "inertia": _matrix(p.inertia),
        } for p in model.primitives],
        joints=[{
            "name": j.name, "parent": j.parent, "child": j.child,
            "frame_in_parent": _matrix(j.frame_in_parent),
            "frame_in_child": _matrix(j.frame_in_child),
            "lower": _matrix(j.lower), "upper": _matrix(j.upper),
            "torque_limit": _matrix(j.torque_limit), "stiffness": j.stiffness,
        } for j in model.joints],
        landmarks=[{"name": lm.name, "link": lm.link, "offset": _matrix(lm.offset)}
                   for lm in model.landmarks],
    )


def body_from_schema(doc: BodyFileSchema) -> BodyModel:
    primitives = [Primitive(kind=PrimitiveKind(p.kind), size=tuple(p.size), transform=p.transform,
                            link=p.link, mass=p.mass, inertia=p.inertia, name=p.name)
                  for p in doc.primitives]
    joints = [JointSpec(parent=j.parent, child=j.child, frame_in_parent=j.frame_in_parent,
                        frame_in_child=j.frame_in_child, lower=j.lower, upper=j.upper,
                        torque_limit=j.torque_limit, stiffness=j.stiffness, name=j.name)
              for j in doc.joints]
    landmarks = [LandmarkAttachment(link=lm.link, offset=lm.offset, name=lm.name)
                 for lm in doc.landmarks]
    return BodyModel(primitives=primitives, joints=joints, base_link=doc.base_link,
                     landmarks=landmarks, link_names=tuple(doc.link_names),
                     foot_links=tuple(doc.foot_links), fixed_base=doc.fixed_base)


def load_body(path: PathLike) -> BodyModel:
    model = body_from_schema(read_document(path, BodyFileSchema))
    logger.info(f"Loaded body with {model.n_links} links, {model.dof_count} DOF, "
                f"{model.total_mass:.2f} kg from {path}")
    return model


def save_body(path: PathLike, model: BodyModel) -> Path:
    return write_document(path, body_to_schema(model))


def load_point_sets(path: PathLike) -> PointSetsFileSchema:
    return read_document(path, PointSetsFileSchema)


def load_topology(path: PathLike) -> TopologyFileSchema:
    return read_document(path, TopologyFileSchema)


# ==================== Motion clips ====================

def clip_to_schema(clip: MotionClip) -> MotionClipFileSchema:
    return MotionClipFileSchema(
        dt=clip.dt,
        source=clip.source,
        states=[state_to_schema(s) for s in clip.states],
        joint_positions=_matrix(clip.joint_positions),
        com=_matrix(clip.com),
        contact_flags=np.asarray(clip.contact_flags, dtype=bool).tolist(),
        landmark_positions=_matrix(clip.landmark_positions),
    )


def clip_from_schema(doc: MotionClipFileSchema) -> MotionClip:
    t = len(doc.states)
    landmarks = np.asarray(doc.landmark_positions, dtype=float)
    if landmarks.size == 0:
        landmarks = np.zeros((t, 0, 3))
    flags = np.asarray(doc.contact_flags, dtype=bool)
    if flags.size == 0:
        flags = np.zeros((t, 0), dtype=bool)
    return MotionClip(
        dt=doc.dt,
        states=[state_from_schema(s) for s in doc.states],
        joint_positions=np.asarray(doc.joint_positions, dtype=float),
        com=doc.com,
        contact_flags=flags,
        landmark_positions=landmarks,
        source=ClipSource(doc.source),
    )


def load_clip(path: PathLike) -> MotionClip:
    clip = clip_from_schema(read_document(path, MotionClipFileSchema))
    logger.info(f"Loaded {clip.source.value} clip with {len(clip)} frames from {path}")
    return clip


def save_clip(path: PathLike, clip: MotionClip) -> Path:
    return write_document(path, clip_to_schema(clip))


# ==================== Controls ====================

def load_controls(path: PathLike):
    """Load a ControlTrajectory."""
    from services.control_spline import ControlTrajectory

    doc = read_document(path, ControlsFileSchema)
    return ControlTrajectory(knot_interval=doc.knot_interval, duration=doc.duration,
                             coefficients=np.asarray(doc.coefficients, dtype=float),
                             start_time=doc.start_time)


def save_controls(path: PathLike, controls) -> Path:
    return write_document(path, ControlsFileSchema(
        knot_interval=controls.knot_interval,
        duration=controls.duration,
        start_time=controls.start_time,
        coefficients=_matrix(controls.coefficients),
    ))


# ==================== Ground & scene ====================

def plane_to_schema(plane: GroundPlane, loss: Optional[float] = None,
                    identifiable: bool = True, converged: bool = True) -> PlaneFileSchema:
    return PlaneFileSchema(
        transform=_matrix(plane.transform), friction=plane.friction,
        stiffness=plane.stiffness, damping=plane.damping,
        normal=_matrix(plane.normal), offset=plane.offset,
        loss=loss, identifiable=identifiable, converged=converged,
    )


def plane_from_schema(doc: PlaneFileSchema) -> GroundPlane:
    return GroundPlane(transform=doc.transform, friction=doc.friction,
                       stiffness=doc.stiffness, damping=doc.damping)


def load_plane(path: PathLike) -> GroundPlane:
    doc = read_document(path, PlaneFileSchema)
    if not doc.identifiable:
        logger.warning(f"Plane in {path} was flagged unidentifiable at estimation time")
    return plane_from_schema(doc)


def save_plane(path: PathLike, plane: GroundPlane, loss: Optional[float] = None,
               identifiable: bool = True, converged: bool = True) -> Path:
    return write_document(path, plane_to_schema(plane, loss, identifiable, converged))


def load_scene(path: PathLike) -> Tuple[GroundPlane, List[StaticBox]]:
    """Scene file: a ground plane plus optional static boxes."""
    doc = read_document(path, SceneFileSchema)
    boxes = [StaticBox(transform=b.transform, half_extents=b.half_extents) for b in doc.static_boxes]
    return plane_from_schema(doc.plane), boxes


def save_scene(path: PathLike, plane: GroundPlane, boxes: Optional[List[StaticBox]] = None) -> Path:
    return write_document(path, SceneFileSchema(
        plane=plane_to_schema(plane),
        static_boxes=[{"transform": _matrix(b.transform), "half_extents": _matrix(b.half_extents)}
                      for b in (boxes or [])],
    ))


# ==================== Prior & run configuration ====================

def load_prior(path: PathLike):
    """Load a quadratic pose prior exported as (rest pose, weight matrix)."""
    from services.objectives import QuadraticPosePrior

    doc = read_document(path, PriorFileSchema)
    return QuadraticPosePrior(rest=np.asarray(doc.rest, dtype=float),
                              weights=np.asarray(doc.weights, dtype=float))


def save_prior(path: PathLike, prior) -> Path:
    return write_document(path, PriorFileSchema(rest=_matrix(prior.rest), weights=_matrix(prior.weights)))


def load_run_config(path: Optional[PathLike] = None) -> RunConfigSchema:
    """Run configuration from a file, or the published defaults when path is None."""
    if path is None:
        return RunConfigSchema()
    config = read_document(path, RunConfigSchema)
    logger.info(f"Loaded run configuration from {path}")
    return config


def save_run_config(path: PathLike, config: RunConfigSchema) -> Path:
    return write_document(path, config)
