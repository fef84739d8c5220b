"""
Unit tests for synthetic scene generation.
"""
import numpy as np
import pytest

from config import CONTACT_SLOP
from enums import ClipSource, Scenario
from exceptions import ContractError
from services.metrics import foot_clearance
from services.objectives import project_points
from services.synthetic import (
    DROP_HEIGHT, NoiseConfig, PoseScript, generate_synthetic, initial_state, look_at_camera,
    render_observations, scripted_controls,
)


@pytest.fixture(scope="module")
def stand_scene():
    """0.2 s of the stock character standing still."""
    return generate_synthetic(Scenario.STAND, seed=0, duration=0.2)


class TestCamera:
    """Tests for look_at_camera."""

    def test_axis_point_hits_image_center(self):
        pixels, in_front = project_points(look_at_camera(), np.array([[0.0, 1.0, 0.0]]))
        np.testing.assert_allclose(pixels[0], [500.0, 500.0])
        assert in_front[0]

    def test_image_y_points_down(self):
        pixels, _ = project_points(look_at_camera(), np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 0.0]]))
        np.testing.assert_allclose(pixels[0], [750.0, 500.0])
        np.testing.assert_allclose(pixels[1], [500.0, 250.0])


class TestScripts:
    """Tests for noise settings and scripted targets."""

    def test_negative_noise_rejected(self):
        with pytest.raises(ContractError):
            NoiseConfig(landmark_px=-1.0)
        with pytest.raises(ContractError):
            NoiseConfig(pose_rad=-0.1)
        assert NoiseConfig().is_zero
        assert not NoiseConfig(landmark_px=1.0).is_zero

    def test_unknown_joint(self, stock_model):
        with pytest.raises(ContractError, match="Unknown joint"):
            PoseScript(stock_model).pose({"tail": np.zeros(3)})

    def test_stand_targets_are_rest(self, stock_model):
        controls = scripted_controls(stock_model, Scenario.STAND, duration=0.4)
        assert controls.dof_count == stock_model.dof_count
        np.testing.assert_allclose(controls.at(0.2), 0.0, atol=1e-12)

    def test_squat_peaks_mid_period(self, stock_model):
        controls = scripted_controls(stock_model, Scenario.SQUAT)
        hip = PoseScript(stock_model).slices["left_hip"]
        assert controls.at(0.5)[hip][0] == pytest.approx(-0.45, abs=0.03)
        assert controls.at(0.0)[hip][0] == pytest.approx(0.0, abs=0.03)

    def test_drop_starts_raised(self, stock_model, stock_standing):
        raised = initial_state(stock_model, Scenario.DROP)
        np.testing.assert_allclose(raised.base_position - stock_standing.base_position,
                                   [0.0, DROP_HEIGHT, 0.0])
        np.testing.assert_allclose(initial_state(stock_model, Scenario.STAND).base_position,
                                   stock_standing.base_position)


class TestGenerateSynthetic:
    """Tests for generate_synthetic and render_observations."""

    def test_frame_counts(self, stand_scene):
        assert len(stand_scene.ground_truth) == 6
        assert len(stand_scene.observations) == 6
        assert stand_scene.observations.fps == pytest.approx(25.0)
        assert stand_scene.ground_truth.source == ClipSource.SIMULATED
        np.testing.assert_allclose(stand_scene.plane.normal, [0.0, 1.0, 0.0])

    def test_standing_character_stays_up(self, stand_scene):
        heights = [s.base_position[1] for s in stand_scene.ground_truth.states]
        assert min(heights) > heights[0] - 0.05

    def test_noise_free_landmarks_are_projections(self, stand_scene):
        clip = stand_scene.ground_truth
        pixels, in_front = project_points(look_at_camera(), clip.landmark_positions)
        assert in_front.all()
        for t, frame in enumerate(stand_scene.observations.frames):
            np.testing.assert_allclose(frame.landmarks_2d, pixels[t])
            np.testing.assert_allclose(frame.kinematic_pose.q, clip.states[t].q)

    def test_seeded_noise_repeats(self, stand_scene):
        noise = NoiseConfig(landmark_px=2.0, pose_rad=0.02)
        model, clip, camera = stand_scene.model, stand_scene.ground_truth, look_at_camera()
        a = render_observations(model, clip, camera, noise, np.random.default_rng(1))
        b = render_observations(model, clip, camera, noise, np.random.default_rng(1))
        c = render_observations(model, clip, camera, noise, np.random.default_rng(2))
        np.testing.assert_array_equal(a.frames[3].landmarks_2d, b.frames[3].landmarks_2d)
        np.testing.assert_array_equal(a.frames[3].kinematic_pose.q, b.frames[3].kinematic_pose.q)
        assert not np.allclose(a.frames[3].landmarks_2d, c.frames[3].landmarks_2d)

    def test_camera_facing_away_sees_nothing(self, stand_scene):
        camera = look_at_camera(position=(0.0, 1.0, -4.0))
        obs = render_observations(stand_scene.model, stand_scene.ground_truth, camera,
                                  NoiseConfig(landmark_px=3.0))
        for frame in obs.frames:
            assert not frame.visibility.any()
            np.testing.assert_array_equal(frame.landmarks_2d, 0.0)

    @pytest.mark.slow
    def test_drop_falls(self):
        scene = generate_synthetic(Scenario.DROP, duration=0.2)
        start = scene.ground_truth.states[0].base_position[1]
        end = scene.ground_truth.states[-1].base_position[1]
        assert 0.15 < start - end < 0.25

    @pytest.mark.slow
    def test_drop_lands_without_sinking(self):
        scene = generate_synthetic(Scenario.DROP, duration=0.8)
        clearance = foot_clearance(scene.ground_truth, scene.model, scene.plane)
        assert clearance.min() >= -(CONTACT_SLOP + 0.002)
        assert scene.ground_truth.contact_flags[-1].any()
        assert clearance[0].min() > DROP_HEIGHT - 0.01

    def test_unknown_scenario(self):
        with pytest.raises(ContractError, match="Unknown scenario"):
            generate_synthetic("cartwheel")
