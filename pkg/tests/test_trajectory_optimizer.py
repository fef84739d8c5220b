"""
Unit tests for window planning and trajectory optimization.
"""
from unittest.mock import patch

import numpy as np
import pytest

from enums import ClipSource, WindowMode
from exceptions import ContractError, OptimizationFailedError, SimulationDivergedError
from motion.models import GroundPlane
from services.clips import kinematic_state
from services.cmaes import CmaConfig
from services.control_spline import ControlTrajectory
from services.objectives import ObjectiveWeights
from services.run_log import IterationLog, read_iteration_log
from services.simulator import SimConfig
from services.trajectory_optimizer import (
    CrossFade, Window, WindowPlan, initial_controls, optimize_sequence, optimize_window,
)

FAR_GROUND = GroundPlane.from_normal_offset([0.0, 1.0, 0.0], 50.0)
TINY_CMA = CmaConfig(population=4, iterations=2, seed=0)


def _spans(windows):
    return [(w.index, w.start, w.stop) for w in windows]


class TestWindowPlan:
    """Tests for WindowPlan.windows."""

    def test_overlapping_windows(self):
        windows = WindowPlan(1.0, 0.25).windows(51, 20.0)
        assert _spans(windows) == [(0, 0, 21), (1, 15, 36), (2, 30, 51)]
        assert [w.start_time for w in windows] == pytest.approx([0.0, 0.75, 1.5])
        assert windows[0].duration == pytest.approx(1.0)

    def test_single_window(self):
        assert _spans(WindowPlan(1.0, 0.25).windows(12, 20.0)) == [(0, 0, 12)]

    def test_short_tail_moved_back(self):
        windows = WindowPlan(1.0, 0.0).windows(22, 20.0)
        assert _spans(windows) == [(0, 0, 21), (1, 18, 22)]
        assert windows[-1].n_frames == 4

    def test_too_few_frames(self):
        with pytest.raises(ContractError):
            WindowPlan().windows(3, 20.0)

    @pytest.mark.parametrize("kwargs", [
        {"window_length": 0.0},
        {"window_length": 1.0, "overlap": 1.0},
        {"overlap": -0.1},
        {"knot_interval": 0.0},
    ])
    def test_invalid_plan(self, kwargs):
        with pytest.raises(ContractError):
            WindowPlan(**kwargs)

    def test_window_properties(self):
        w = Window(2, 30, 51, 20.0)
        assert w.n_frames == 21
        assert w.start_time == pytest.approx(1.5)


class TestCrossFade:
    """Tests for the blended window controls."""

    @pytest.fixture
    def fade(self):
        head = ControlTrajectory.constant(np.zeros(3), 1.0, 0.2)
        tail = ControlTrajectory.constant(np.ones(3), 1.0, 0.2)
        return CrossFade(head, tail, fade_start=0.75, tail_offset=0.75)

    def test_head_before_fade(self, fade):
        np.testing.assert_allclose(fade.at(0.5), 0.0)
        np.testing.assert_allclose(fade.at(0.75), 0.0)

    def test_linear_blend(self, fade):
        np.testing.assert_allclose(fade.at(0.875), 0.5, atol=1e-12)
        np.testing.assert_allclose(fade.at(1.0), 1.0, atol=1e-12)

    def test_schedule_interface(self, fade):
        assert fade.duration == pytest.approx(1.0)
        assert fade.dof_count == 3


class TestOptimizeWindow:
    """Tests for optimize_window on the pendulum."""

    def _run(self, pendulum, obs, **kwargs):
        init = initial_controls(obs, 0.2)
        return optimize_window(pendulum, obs, FAR_GROUND, kinematic_state(obs, 0), init,
                               ObjectiveWeights(), TINY_CMA, SimConfig(ground=FAR_GROUND), **kwargs)

    def test_never_worse_than_initialization(self, pendulum, pendulum_obs):
        result = self._run(pendulum, pendulum_obs)
        assert result.final_loss <= result.initial_loss
        assert len(result.clip) == len(pendulum_obs)
        assert result.clip.source == ClipSource.SIMULATED
        assert result.controls.dof_count == 3
        report = result.report()
        assert report["iterations"] == 2
        assert report["evaluations"] == 9
        assert not report["failed"]

    def test_iteration_log(self, pendulum, pendulum_obs, tmp_path):
        log = IterationLog(tmp_path / "iterations.jsonl")
        self._run(pendulum, pendulum_obs, iteration_log=log, window_index=3)
        records = read_iteration_log(tmp_path / "iterations.jsonl")
        assert [r["iteration"] for r in records] == [1, 2]
        assert all(r["window"] == 3 for r in records)
        assert "L_com" in records[-1]["terms"]

    def test_all_rollouts_diverge(self, pendulum, pendulum_obs):
        with patch("services.trajectory_optimizer.simulate", side_effect=SimulationDivergedError(3)):
            with pytest.raises(OptimizationFailedError) as exc:
                self._run(pendulum, pendulum_obs, window_index=5)
        assert exc.value.window == 5

    def test_controls_must_match_window(self, pendulum, pendulum_obs):
        init = ControlTrajectory.constant(np.zeros(3), 2.0, 0.2)
        with pytest.raises(ContractError, match="window spans"):
            optimize_window(pendulum, pendulum_obs, FAR_GROUND, kinematic_state(pendulum_obs, 0), init,
                            ObjectiveWeights(), TINY_CMA, SimConfig())


class TestOptimizeSequence:
    """Tests for joining windows into one clip."""

    @pytest.mark.parametrize("mode", [WindowMode.SEQUENTIAL, WindowMode.PARALLEL_JOIN])
    def test_joined_clip_covers_sequence(self, pendulum, pendulum_obs, mode):
        plan = WindowPlan(0.3, 0.1, mode=mode)
        result = optimize_sequence(pendulum, pendulum_obs, FAR_GROUND, ObjectiveWeights(), plan,
                                   TINY_CMA, SimConfig())
        assert len(result.clip) == len(pendulum_obs)
        assert len(result.windows) == 3
        report = result.report()
        assert report["mode"] == mode.value
        assert report["failed_windows"] == []
        assert report["total_loss"] is not None
        assert [w["start_frame"] for w in report["windows"]] == [0, 4, 8]

    def test_sequential_windows_chain_states(self, pendulum, pendulum_obs):
        plan = WindowPlan(0.3, 0.1)
        result = optimize_sequence(pendulum, pendulum_obs, FAR_GROUND, ObjectiveWeights(), plan,
                                   TINY_CMA, SimConfig())
        first, second = result.windows[0], result.windows[1]
        np.testing.assert_allclose(second.clip.states[0].q, first.clip.states[4].q)

    def test_failed_windows_fall_back(self, pendulum, pendulum_obs):
        plan = WindowPlan(0.3, 0.1)
        with patch("services.trajectory_optimizer.simulate", side_effect=SimulationDivergedError(0)):
            result = optimize_sequence(pendulum, pendulum_obs, FAR_GROUND, ObjectiveWeights(), plan,
                                       TINY_CMA, SimConfig())
        report = result.report()
        assert report["failed_windows"] == [0, 1, 2]
        assert report["total_loss"] is None
        assert len(result.clip) == len(pendulum_obs)
        np.testing.assert_allclose(result.clip.states[5].q, pendulum_obs.frames[5].kinematic_pose.q)
