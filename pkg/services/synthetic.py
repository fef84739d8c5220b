"""
Synthetic scenes for the PhysMotion pipeline.
Simulates the stock character under scripted control targets, renders its
landmarks through a pinhole camera and packages the result as observations
plus the true motion, with optional Gaussian noise on landmarks and poses.
"""
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from config import KNOT_INTERVAL
from enums import Scenario
from exceptions import ContractError
from motion.models import (
    BodyModel, GroundPlane, MotionClip, ObservationFrame, ObservationSequence, SimState,
)
from services import control_spline
from services.control_spline import ControlTrajectory
from services.objectives import project_points
from services.simulator import SimConfig, simulate
from services.stock_character import build_stock_character, standing_state
from utils.logger import logger
from utils.rotations import make_transform

SYNTH_FPS = 25.0
SYNTH_DURATION = 1.0
DROP_HEIGHT = 0.5

IMAGE_SIZE = (1000, 1000)   # px
FOCAL_LENGTH = 1000.0       # px


@dataclass(frozen=True)
class NoiseConfig:
    """Standard deviations of the injected Gaussian noise."""
    landmark_px: float = 0.0
    pose_rad: float = 0.0

    def __post_init__(self):
        if self.landmark_px < 0 or self.pose_rad < 0:
            raise ContractError("Noise levels must be non-negative")

    @property
    def is_zero(self) -> bool:
        return self.landmark_px == 0 and self.pose_rad == 0


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    scenario: Scenario
    model: BodyModel
    plane: GroundPlane
    controls: ControlTrajectory
    ground_truth: MotionClip
    observations: ObservationSequence
    seed: int


def look_at_camera(position=(0.0, 1.0, 4.0), focal: float = FOCAL_LENGTH,
                   image_size=IMAGE_SIZE) -> np.ndarray:
    """
    3x4 projection K [R | t] of a camera at `position` looking along -z with
    image y pointing down (world y is up).
    """
    rotation = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
    t = -rotation @ np.asarray(position, dtype=float)
    k = np.array([[focal, 0.0, image_size[0] / 2.0],
                  [0.0, focal, image_size[1] / 2.0],
                  [0.0, 0.0, 1.0]])
    return k @ make_transform(rotation, t)[:3]


# ==================== Scripted targets ====================

class PoseScript:
    """Joint targets addressed by joint name; unnamed joints stay at rest."""

    def __init__(self, model: BodyModel):
        self.model = model
        self.slices = {j.name: model.dof_slice(k) for k, j in enumerate(model.joints)}

    def pose(self, angles: Dict[str, np.ndarray]) -> np.ndarray:
        q = np.zeros(self.model.dof_count)
        for name, value in angles.items():
            if name not in self.slices:
                raise ContractError(f"Unknown joint '{name}'")
            q[self.slices[name]] = value
        return q


def _flexion(angle: float) -> np.ndarray:
    """Rotation about the lateral (x) axis; positive tips forward-down limbs backward."""
    return np.array([angle, 0.0, 0.0])


def _stand(script: PoseScript, t: float) -> np.ndarray:
    return script.pose({})


def _squat(script: PoseScript, t: float, depth: float = 0.45, period: float = SYNTH_DURATION) -> np.ndarray:
    h = depth * 0.5 * (1.0 - np.cos(2.0 * np.pi * t / period))
    angles = {"abdomen": _flexion(0.3 * h)}
    for side in ("left", "right"):
        angles[f"{side}_hip"] = _flexion(-h)
        angles[f"{side}_knee"] = _flexion(2.0 * h)
        angles[f"{side}_ankle"] = _flexion(-h)
    return script.pose(angles)


def _walk_cycle(script: PoseScript, t: float, period: float = SYNTH_DURATION,
                swing: float = 0.35) -> np.ndarray:
    phase = 2.0 * np.pi * t / period
    angles = {}
    for side, shift in (("left", 0.0), ("right", np.pi)):
        s = np.sin(phase + shift)
        knee = 0.6 * max(0.0, np.sin(phase + shift + np.pi / 2)) ** 2
        angles[f"{side}_hip"] = _flexion(-swing * s)
        angles[f"{side}_knee"] = _flexion(knee)
        angles[f"{side}_ankle"] = _flexion(swing * s - knee)
        angles[f"{side}_shoulder"] = _flexion(0.5 * swing * s)
    return script.pose(angles)


SCRIPTS: Dict[Scenario, Callable[[PoseScript, float], np.ndarray]] = {
    Scenario.STAND: _stand,
    Scenario.SQUAT: _squat,
    Scenario.WALK_CYCLE: _walk_cycle,
    Scenario.DROP: _stand,
}


def scripted_controls(model: BodyModel, scenario: Scenario, duration: float = SYNTH_DURATION,
                      fps: float = SYNTH_FPS, knot_interval: float = KNOT_INTERVAL) -> ControlTrajectory:
    """Spline through the scripted targets sampled at fps."""
    script = PoseScript(model)
    fn = SCRIPTS[Scenario(scenario)]
    n = int(round(duration * fps)) + 1
    samples = np.stack([fn(script, k / fps) for k in range(n)])
    return control_spline.fit_to_samples(samples, fps, knot_interval)


def initial_state(model: BodyModel, scenario: Scenario) -> SimState:
    state = standing_state(model)
    if Scenario(scenario) == Scenario.DROP:
        return state.replace(base_position=state.base_position + np.array([0.0, DROP_HEIGHT, 0.0]))
    return state


# ==================== Observations ====================

def render_observations(model: BodyModel, clip: MotionClip, camera: np.ndarray,
                        noise: NoiseConfig = NoiseConfig(),
                        rng: Optional[np.random.Generator] = None) -> ObservationSequence:
    """
    Observations of a clip: its states as kinematic poses and its landmarks
    projected through camera. Landmarks behind the camera are marked
    invisible with zero pixels.
    """
    rng = rng or np.random.default_rng(0)
    pixels, in_front = project_points(camera, clip.landmark_positions)
    pixels = np.where(in_front[..., None], pixels, 0.0)
    if noise.landmark_px > 0:
        pixels = pixels + rng.normal(0.0, noise.landmark_px, size=pixels.shape) * in_front[..., None]
    frames = []
    for t, state in enumerate(clip.states):
        pose = state
        if noise.pose_rad > 0:
            pose = state.replace(q=state.q + rng.normal(0.0, noise.pose_rad, size=state.q.shape))
        frames.append(ObservationFrame(kinematic_pose=pose, landmarks_2d=pixels[t],
                                       landmark_scores=np.ones(len(model.landmarks)),
                                       visibility=in_front[t]))
    return ObservationSequence(fps=clip.fps, frames=tuple(frames), camera=camera,
                               landmark_ids=model.landmark_ids)


def generate_synthetic(scenario: Scenario, seed: int = 0, noise: NoiseConfig = NoiseConfig(),
                       duration: float = SYNTH_DURATION, fps: float = SYNTH_FPS,
                       model: Optional[BodyModel] = None, sim: Optional[SimConfig] = None,
                       camera: Optional[np.ndarray] = None) -> SyntheticScene:
    """
    Simulate a scripted scene on the plane y = 0 and render its observations.

    Raises:
        ContractError: unknown scenario
    """
    try:
        scenario = Scenario(scenario)
    except ValueError:
        choices = ", ".join(s.value for s in Scenario)
        raise ContractError(f"Unknown scenario '{scenario}' (choose from {choices})")
    model = model or build_stock_character()
    plane = GroundPlane()
    sim = sim or SimConfig(ground=plane)
    camera = look_at_camera() if camera is None else np.asarray(camera, dtype=float)

    controls = scripted_controls(model, scenario, duration, fps)
    truth = simulate(model, initial_state(model, scenario), controls, duration, sim, fps=fps)
    rng = np.random.default_rng(seed)
    obs = render_observations(model, truth, camera, noise, rng)
    logger.info(f"Synthetic '{scenario.value}' scene: {len(truth)} frames at {fps:g} fps, "
                f"noise {noise.landmark_px:g} px / {noise.pose_rad:g} rad, seed {seed}")
    return SyntheticScene(scenario, model, plane, controls, truth, obs, seed)
