"""
Shared fixtures for the PhysMotion test suite.
Small hand-built chains keep the dynamics tests fast; the stock character is
built once per session.
"""
import numpy as np
import pytest

from enums import PrimitiveKind
from motion.kinematics import forward_kinematics
from motion.models import (
    BodyModel, GroundPlane, JointSpec, LandmarkAttachment, ObservationFrame, ObservationSequence,
    SimState,
)
from services.body_builder import make_primitive
from services.objectives import project_points
from services.stock_character import build_stock_character, standing_state
from utils.rotations import make_transform


def _chain(fixed_base: bool, torque: float = 50.0) -> BodyModel:
    """Box base with one capsule hanging from a spherical joint at the origin."""
    base = make_primitive(PrimitiveKind.BOX, (0.2, 0.1, 0.2), np.eye(4), link=0, mass=2.0, name="base")
    arm = make_primitive(PrimitiveKind.CAPSULE, (0.04, 0.4), make_transform(None, [0.0, -0.3, 0.0]),
                         link=1, mass=1.0, name="arm")
    joint = JointSpec(parent=0, child=1, frame_in_parent=make_transform(None, [0.0, -0.05, 0.0]),
                      frame_in_child=np.eye(4), lower=np.full(3, -np.pi), upper=np.full(3, np.pi),
                      torque_limit=np.full(3, torque), name="swing")
    landmarks = (
        LandmarkAttachment(0, np.array([0.0, 0.05, 0.0]), "top"),
        LandmarkAttachment(1, np.array([0.0, -0.5, 0.0]), "tip"),
        LandmarkAttachment(1, np.array([0.1, -0.3, 0.0]), "side"),
    )
    return BodyModel(primitives=(base, arm), joints=(joint,), landmarks=landmarks,
                     link_names=("base", "arm"), foot_links=(1,), fixed_base=fixed_base)


@pytest.fixture
def pendulum() -> BodyModel:
    """Fixed-base two-link pendulum (3 DOF)."""
    return _chain(fixed_base=True)


@pytest.fixture
def free_chain() -> BodyModel:
    """Free-floating two-link chain (9 velocity DOF)."""
    return _chain(fixed_base=False)


@pytest.fixture
def flat_ground() -> GroundPlane:
    return GroundPlane()


@pytest.fixture(scope="session")
def stock_model() -> BodyModel:
    return build_stock_character()


@pytest.fixture(scope="session")
def stock_standing(stock_model) -> SimState:
    return standing_state(stock_model)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


CAMERA = np.array([[500.0, 0.0, 320.0, 0.0],
                   [0.0, -500.0, 240.0, 0.0],
                   [0.0, 0.0, -1.0, 4.0]])


def observe(model: BodyModel, states, fps: float, camera: np.ndarray = CAMERA) -> ObservationSequence:
    """Observation sequence whose 2D landmarks are exact projections of `states`."""
    frames = []
    for state in states:
        pts = forward_kinematics(model, state).landmark_positions
        pixels, _ = project_points(camera, pts)
        n = len(model.landmarks)
        frames.append(ObservationFrame(state, pixels, np.ones(n), np.ones(n, dtype=bool)))
    return ObservationSequence(fps=fps, frames=frames, camera=camera, landmark_ids=model.landmark_ids)


def swing_states(model: BodyModel, frames: int, fps: float, amplitude: float = 0.3):
    """Pendulum-like swing about z at 1 Hz."""
    t = np.arange(frames) / fps
    return [SimState.rest(model).replace(q=np.array([0.0, 0.0, amplitude * np.sin(2 * np.pi * s)]))
            for s in t]


@pytest.fixture
def pendulum_obs(pendulum) -> ObservationSequence:
    """12 frames at 20 fps of an exactly observed swing."""
    return observe(pendulum, swing_states(pendulum, 12, 20.0), 20.0)


@pytest.fixture
def biped() -> BodyModel:
    """Free box torso with two capsule legs; both legs are feet."""
    torso = make_primitive(PrimitiveKind.BOX, (0.3, 0.2, 0.15), np.eye(4), link=0, mass=4.0, name="torso")
    joints, legs, landmarks = [], [], [LandmarkAttachment(0, np.array([0.0, 0.1, 0.0]), "neck")]
    for link, (side, x) in enumerate((("left", 0.1), ("right", -0.1)), start=1):
        legs.append(make_primitive(PrimitiveKind.CAPSULE, (0.05, 0.3), make_transform(None, [0.0, -0.2, 0.0]),
                                   link=link, mass=1.5, name=f"{side}_leg"))
        joints.append(JointSpec(parent=0, child=link, frame_in_parent=make_transform(None, [x, -0.1, 0.0]),
                                frame_in_child=np.eye(4), lower=np.full(3, -1.5), upper=np.full(3, 1.5),
                                torque_limit=np.full(3, 80.0), name=f"{side}_hip"))
        landmarks.append(LandmarkAttachment(link, np.array([0.0, -0.4, 0.0]), f"{side}_heel"))
    return BodyModel(primitives=(torso, *legs), joints=tuple(joints), landmarks=tuple(landmarks),
                     link_names=("torso", "left_leg", "right_leg"), foot_links=(1, 2))


BIPED_STANCE = 0.5   # base height with the leg capsules touching y = 0
