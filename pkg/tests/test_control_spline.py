"""
Unit tests for the control-target B-splines.
"""
import numpy as np
import pytest
from scipy.interpolate import BSpline

from exceptions import ContractError, IllPosedError
from services.control_spline import (
    ControlTrajectory, affected_interval, basis_matrix, clamped_knots, evaluate, evaluate_many,
    fit_to_samples, flatten, span_count, unflatten,
)


@pytest.fixture
def trajectory(rng):
    # 1 s at 0.2 s knots -> 5 spans, 8 basis functions
    return ControlTrajectory(0.2, 1.0, rng.normal(size=(8, 4)))


class TestKnots:
    """Tests for knot layout helpers."""

    def test_span_count(self):
        assert span_count(1.0, 0.2) == 5
        assert span_count(0.5, 0.2) == 2
        assert span_count(0.1, 0.2) == 1

    def test_clamped_knots(self):
        knots = clamped_knots(1.0, 5)
        assert len(knots) == 5 + 1 + 6
        np.testing.assert_allclose(knots[:4], 0.0)
        np.testing.assert_allclose(knots[-4:], 1.0)

    def test_partition_of_unity(self):
        knots = clamped_knots(2.0, 7)
        rows = basis_matrix(knots, 10, np.linspace(0.0, 2.0, 41))
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(rows >= -1e-15)


class TestControlTrajectory:
    """Tests for ControlTrajectory construction and evaluation."""

    def test_shape_checked(self):
        with pytest.raises(ContractError, match="basis rows"):
            ControlTrajectory(0.2, 1.0, np.zeros((7, 3)))

    def test_non_finite_rejected(self):
        coeffs = np.zeros((8, 3))
        coeffs[2, 1] = np.inf
        with pytest.raises(ContractError):
            ControlTrajectory(0.2, 1.0, coeffs)

    def test_constant_holds_pose(self):
        pose = np.array([0.3, -0.1, 0.7])
        traj = ControlTrajectory.constant(pose, 0.75, 0.2)
        for t in (0.0, 0.1, 0.33, 0.75):
            np.testing.assert_allclose(traj.at(t), pose, atol=1e-12)

    def test_endpoints_interpolate(self, trajectory):
        np.testing.assert_allclose(trajectory.at(0.0), trajectory.coefficients[0], atol=1e-12)
        np.testing.assert_allclose(trajectory.at(1.0), trajectory.coefficients[-1], atol=1e-12)

    def test_evaluate_many_matches_evaluate(self, trajectory):
        times = np.linspace(0.0, 1.0, 17)
        stacked = evaluate_many(trajectory, times)
        for t, row in zip(times, stacked):
            np.testing.assert_allclose(row, evaluate(trajectory, t), atol=1e-12)

    def test_matches_scipy_bspline(self, trajectory):
        times = np.linspace(0.0, 0.99, 23)
        reference = BSpline(trajectory.knots, trajectory.coefficients, 3)(times)
        np.testing.assert_allclose(evaluate_many(trajectory, times), reference, atol=1e-12)

    @pytest.mark.parametrize("t", [-0.01, 1.01])
    def test_outside_domain(self, trajectory, t):
        with pytest.raises(ContractError, match="outside"):
            trajectory.at(t)

    def test_parameter_count(self, trajectory):
        assert trajectory.parameter_count == 32
        assert trajectory.dof_count == 4


class TestLocalSupport:
    """Changing one coefficient row only moves its support interval."""

    def test_perturbation_is_local(self, trajectory):
        coeffs = trajectory.coefficients.copy()
        coeffs[1] += 1.0
        moved = trajectory.with_coefficients(coeffs)
        lo, hi = affected_interval(trajectory, 1)
        assert (lo, hi) == pytest.approx((0.0, 0.4))
        for t in np.linspace(0.0, 1.0, 51):
            same = np.allclose(moved.at(t), trajectory.at(t))
            if t >= hi + 1e-9:
                assert same
        assert not np.allclose(moved.at(0.1), trajectory.at(0.1))

    def test_interior_basis_support(self, trajectory):
        assert affected_interval(trajectory, 4) == pytest.approx((0.2, 1.0))


class TestFit:
    """Tests for least-squares fitting."""

    def test_cubic_reproduced(self):
        fps = 30.0
        t = np.arange(31) / fps
        samples = np.stack([t ** 3 - t, 0.5 * t ** 2, np.full_like(t, 0.2)], axis=1)
        traj = fit_to_samples(samples, fps, 0.2)
        assert traj.duration == pytest.approx(1.0)
        assert traj.residual_rms < 1e-10
        np.testing.assert_allclose(evaluate_many(traj, t), samples, atol=1e-9)

    def test_start_time_kept(self):
        traj = fit_to_samples(np.zeros((10, 2)), 30.0, 0.1, start_time=1.5)
        assert traj.start_time == 1.5

    def test_too_few_samples(self):
        with pytest.raises(ContractError):
            fit_to_samples(np.zeros((3, 2)), 30.0, 0.2)

    def test_rank_deficient(self):
        with pytest.raises(IllPosedError):
            fit_to_samples(np.zeros((4, 2)), 1.0, 0.2)

    def test_one_dimensional_samples(self):
        traj = fit_to_samples(np.linspace(0.0, 1.0, 20), 20.0, 0.3)
        assert traj.dof_count == 1


class TestFlatten:
    """Tests for the optimizer parameter vector."""

    def test_round_trip(self, trajectory):
        vector = flatten(trajectory)
        assert vector.shape == (32,)
        np.testing.assert_array_equal(unflatten(trajectory, vector).coefficients, trajectory.coefficients)

    def test_row_major(self, trajectory):
        vector = flatten(trajectory)
        np.testing.assert_array_equal(vector[:4], trajectory.coefficients[0])

    def test_wrong_length(self, trajectory):
        with pytest.raises(ContractError):
            unflatten(trajectory, np.zeros(31))
