"""
Unit tests for the rigid-body dynamics, contact solver and simulator.
"""
import numpy as np
import pytest

from enums import ClipSource, PDMode
from exceptions import ContractError, SimulationDivergedError
from motion.models import GroundPlane, SimState, StaticBox
from services.contact import (
    ContactRecord, box_signed_distance, compliant_normal_impulses, normal_velocity_targets,
    project_friction, solve_contacts,
)
from services.control_spline import ControlTrajectory
from services.dynamics import (
    dynamics_terms, forward_dynamics, gravity_vector, inverse_dynamics, kinetic_energy, momentum,
    potential_energy,
)
from services.simulator import (
    ControlTarget, SimConfig, compute_torques, default_contact_threshold, detect_foot_contacts,
    simulate, step,
)
from services.clips import clip_from_observations
from tests.conftest import BIPED_STANCE, observe
from utils.rotations import make_transform

FAR_GROUND = GroundPlane.from_normal_offset([0.0, 1.0, 0.0], 50.0)
G = np.array([0.0, -9.8, 0.0])


def _hold(model, duration, pose=None):
    pose = np.zeros(model.dof_count) if pose is None else pose
    return ControlTrajectory.constant(pose, duration, 0.2)


class TestDynamics:
    """Tests for the mass matrix and bias forces."""

    def test_mass_matrix_spd(self, free_chain, rng):
        state = SimState.rest(free_chain).replace(q=rng.normal(scale=0.5, size=3),
                                                  qdot=rng.normal(size=3))
        m = dynamics_terms(free_chain, state, G).mass_matrix
        np.testing.assert_allclose(m, m.T, atol=1e-12)
        assert np.linalg.eigvalsh(m).min() > 0

    def test_free_fall_acceleration(self, free_chain):
        accel = forward_dynamics(free_chain, SimState.rest(free_chain, (0.0, 5.0, 0.0)), np.zeros(3), G)
        np.testing.assert_allclose(accel[3:6], G, atol=1e-9)
        np.testing.assert_allclose(accel[[0, 1, 2, 6, 7, 8]], 0.0, atol=1e-9)

    def test_inverse_of_forward(self, free_chain, rng):
        state = SimState.rest(free_chain).replace(q=rng.normal(scale=0.4, size=3),
                                                  qdot=rng.normal(size=3),
                                                  base_ang_vel=rng.normal(size=3))
        tau = rng.normal(size=3)
        accel = forward_dynamics(free_chain, state, tau, G)
        force = inverse_dynamics(free_chain, state, accel, G)
        np.testing.assert_allclose(force, np.concatenate([np.zeros(6), tau]), atol=1e-9)

    def test_horizontal_pendulum(self, pendulum):
        state = SimState.rest(pendulum).replace(q=np.array([0.0, 0.0, np.pi / 2]))
        accel = forward_dynamics(pendulum, state, np.zeros(3), G)
        pivot_inertia = pendulum.link_inertias[1][2, 2] + 1.0 * 0.3 ** 2
        np.testing.assert_allclose(accel, [0.0, 0.0, -9.8 * 0.3 / pivot_inertia], atol=1e-9)

    def test_energy_at_rest(self, pendulum):
        state = SimState.rest(pendulum)
        assert kinetic_energy(pendulum, state) == 0.0
        assert potential_energy(pendulum, state, G) == pytest.approx(-9.8 * 0.35)

    def test_gravity_vector(self):
        np.testing.assert_allclose(gravity_vector(9.8, [0.0, 2.0, 0.0]), G)


class TestContactSolver:
    """Tests for the contact primitives."""

    def test_project_friction_pyramid(self):
        out = project_friction(np.array([1.0, 5.0, -5.0]), 0.9)
        bound = 0.9 / np.sqrt(2.0)
        np.testing.assert_allclose(out, [1.0, bound, -bound])
        assert np.linalg.norm(out[1:]) <= 0.9 * out[0] + 1e-12

    def test_negative_normal_clamped(self):
        np.testing.assert_allclose(project_friction(np.array([-1.0, 0.3, 0.0]), 0.9), 0.0)

    def test_single_contact_stops_approach(self):
        delassus = np.eye(3)
        free = np.array([-2.0, 0.5, 0.0])
        impulses = solve_contacts(delassus, free, np.zeros(1), 0.9, 20)
        post = delassus @ impulses.reshape(-1) + free
        assert post[0] == pytest.approx(0.0, abs=1e-9)
        assert impulses[0, 0] == pytest.approx(2.0)
        # sliding within the cone is stopped completely
        assert post[1] == pytest.approx(0.0, abs=1e-9)

    def test_separating_contact_has_no_impulse(self):
        impulses = solve_contacts(np.eye(3), np.array([1.0, 0.3, 0.0]), np.zeros(1), 0.9, 10)
        np.testing.assert_allclose(impulses, 0.0)

    def test_normal_targets(self):
        targets = normal_velocity_targets(np.array([0.01, -0.001, -0.012]), 0.005, 0.002, 0.2)
        assert targets[0] == pytest.approx(-2.0)
        assert targets[1] == 0.0
        assert targets[2] == pytest.approx(0.2 * 0.01 / 0.005)

    def test_compliant_impulses(self):
        out = compliant_normal_impulses(np.array([-0.01, 0.02]), np.array([0.0, 0.0]), 1e4, 10.0, 0.01)
        np.testing.assert_allclose(out, [1.0, 0.0])

    def test_box_distance(self):
        box = StaticBox(make_transform(None, [0.0, 0.25, 0.0]), [0.5, 0.25, 0.5])
        d, n = box_signed_distance(box, np.array([[0.0, 0.7, 0.0], [0.0, 0.4, 0.0]]))
        np.testing.assert_allclose(d, [0.2, -0.1], atol=1e-12)
        np.testing.assert_allclose(n, [[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]], atol=1e-12)

    def test_cone_violation(self):
        record = ContactRecord(0, np.array([1]), np.array([1.0]), np.array([[0.3, 0.4]]), 0.9)
        assert record.max_cone_violation() == pytest.approx(0.5 - 0.9)


class TestSimConfig:
    """Tests for SimConfig validation."""

    def test_defaults(self):
        cfg = SimConfig()
        assert cfg.dt == pytest.approx(1.0 / 200.0)
        assert cfg.friction == pytest.approx(0.9)
        assert (cfg.kp, cfg.kd) == (4.0, 0.3)
        assert cfg.pd_mode == PDMode.STABLE

    def test_self_collision_unsupported(self):
        with pytest.raises(ContractError, match="Self-collision"):
            SimConfig(self_collision=True)

    def test_gravity_follows_ground_normal(self):
        plane = GroundPlane.from_normal_offset([1.0, 1.0, 0.0], 0.0)
        g = SimConfig(ground=plane).gravity_vector
        np.testing.assert_allclose(g, -9.8 * np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0), atol=1e-12)


class TestTorques:
    """Tests for PD torques."""

    def test_clamped_to_limits(self, pendulum):
        cfg = SimConfig(kp=1000.0)
        tau = compute_torques(pendulum, SimState.rest(pendulum), ControlTarget(np.array([0.5, -0.5, 0.01])), cfg)
        np.testing.assert_allclose(tau, [50.0, -50.0, 10.0])

    def test_error_is_wrapped(self, pendulum):
        cfg = SimConfig(kp=1.0, kd=0.0)
        state = SimState.rest(pendulum).replace(q=np.array([3.0, 0.0, 0.0]))
        tau = compute_torques(pendulum, state, ControlTarget(np.array([-3.0, 0.0, 0.0])), cfg)
        assert tau[0] == pytest.approx(2.0 * np.pi - 6.0)

    def test_dimension_mismatch(self, pendulum):
        with pytest.raises(ContractError):
            compute_torques(pendulum, SimState.rest(pendulum), ControlTarget(np.zeros(6)), SimConfig())

    def test_target_must_be_finite(self):
        with pytest.raises(ContractError):
            ControlTarget(np.array([np.nan]))

    def test_target_reduced_to_two_pi(self):
        q_hat = ControlTarget(np.array([7.0, -7.0, 1.0, 2.0 * np.pi, -20.0])).q_hat
        assert np.all(np.abs(q_hat) <= 2.0 * np.pi)
        np.testing.assert_allclose(q_hat[:3], [7.0 - 2.0 * np.pi, 2.0 * np.pi - 7.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(np.cos(q_hat), np.cos([7.0, -7.0, 1.0, 2.0 * np.pi, -20.0]), atol=1e-12)
        assert q_hat[2] == 1.0


class TestStep:
    """Tests for single-step and rollout behaviour."""

    def test_ballistic_flight(self, free_chain):
        cfg = SimConfig(ground=FAR_GROUND)
        clip = simulate(free_chain, SimState.rest(free_chain, (0.0, 10.0, 0.0)), _hold(free_chain, 0.5),
                        0.5, cfg, fps=20.0)
        assert len(clip) == 11
        last = clip.states[-1]
        np.testing.assert_allclose(last.base_lin_vel, [0.0, -4.9, 0.0], atol=1e-9)
        expected_y = 10.0 - 9.8 * cfg.dt ** 2 * 100 * 101 / 2
        assert last.base_position[1] == pytest.approx(expected_y, abs=1e-9)
        np.testing.assert_allclose(last.q, 0.0, atol=1e-12)

    @pytest.mark.parametrize("mode,kp,kd,tolerance", [
        (PDMode.STABLE, 400.0, 40.0, 0.01),
        (PDMode.EXPLICIT, 40.0, 4.0, 0.05),
    ])
    def test_pd_tracks_target(self, pendulum, mode, kp, kd, tolerance):
        cfg = SimConfig(ground=FAR_GROUND, kp=kp, kd=kd, pd_mode=mode)
        target = np.array([0.0, 0.0, 0.3])
        clip = simulate(pendulum, SimState.rest(pendulum), _hold(pendulum, 1.0, target), 1.0, cfg, fps=10.0)
        assert clip.states[-1].q[2] == pytest.approx(0.3, abs=tolerance)

    @pytest.mark.slow
    def test_knee_converges_without_gravity(self, stock_model, stock_standing):
        cfg = SimConfig(gravity=0.0, ground=FAR_GROUND)
        knee = stock_model.dof_slice([j.name for j in stock_model.joints].index("left_knee"))
        target = np.zeros(stock_model.dof_count)
        target[knee] = [0.8, 0.0, 0.0]
        clip = simulate(stock_model, stock_standing, _hold(stock_model, 1.5, target), 1.5, cfg, fps=10.0)
        errors = [np.linalg.norm(s.q[knee] - target[knee]) for s in clip.states]
        assert errors[-1] < 0.05
        assert errors[-1] < errors[0]

    def test_standing_biped_does_not_sink(self, biped):
        cfg = SimConfig()
        log = []
        clip = simulate(biped, SimState.rest(biped, (0.0, BIPED_STANCE + 0.01, 0.0)), _hold(biped, 0.3),
                        0.3, cfg, fps=20.0, contact_log=log)
        heights = np.array([s.base_position[1] for s in clip.states])
        assert heights.min() > BIPED_STANCE - 0.005
        assert heights[-1] == pytest.approx(BIPED_STANCE, abs=0.01)
        assert clip.contact_flags[-1].all()
        touching = [r for r in log if r.normal_impulses.size]
        assert touching
        assert all(r.max_cone_violation() <= 1e-9 for r in touching)
        assert all(np.all(r.normal_impulses >= 0.0) for r in touching)

    def test_frictionless_feet_slide(self, biped):
        s0 = SimState.rest(biped, (0.0, BIPED_STANCE, 0.0)).replace(base_lin_vel=np.array([1.0, 0.0, 0.0]))
        clip = simulate(biped, s0, _hold(biped, 0.2), 0.2, SimConfig(friction=0.0), fps=10.0)
        heel_travel = clip.landmark_positions[-1, 1, 0] - clip.landmark_positions[0, 1, 0]
        assert heel_travel > 0.19
        assert clip.states[-1].base_lin_vel[0] > 0.95

    def test_friction_stops_feet(self, biped):
        s0 = SimState.rest(biped, (0.0, BIPED_STANCE, 0.0)).replace(base_lin_vel=np.array([1.0, 0.0, 0.0]))
        clip = simulate(biped, s0, _hold(biped, 0.2), 0.2, SimConfig(friction=0.9), fps=10.0)
        heel_travel = clip.landmark_positions[-1, 1, 0] - clip.landmark_positions[0, 1, 0]
        assert abs(heel_travel) < 0.12

    def test_static_box_supports_body(self, biped):
        box = StaticBox(make_transform(None, [0.0, 0.25, 0.0]), [0.5, 0.25, 0.5])
        cfg = SimConfig(static_boxes=[box])
        s0 = SimState.rest(biped, (0.0, 0.5 + BIPED_STANCE + 0.005, 0.0))
        clip = simulate(biped, s0, _hold(biped, 0.2), 0.2, cfg, fps=10.0)
        assert clip.states[-1].base_position[1] > 0.5 + BIPED_STANCE - 0.01
        assert clip.contact_flags[-1].all()

    def test_compliant_ground_penetrates_slightly(self, biped):
        plane = GroundPlane(stiffness=2e4, damping=300.0)
        s0 = SimState.rest(biped, (0.0, BIPED_STANCE, 0.0))
        clip = simulate(biped, s0, _hold(biped, 0.3), 0.3, SimConfig(ground=plane), fps=10.0)
        height = clip.states[-1].base_position[1]
        assert BIPED_STANCE - 0.02 < height < BIPED_STANCE

    def test_divergence_reports_step(self, free_chain):
        state = SimState.rest(free_chain, (0.0, 10.0, 0.0)).replace(base_lin_vel=np.array([1e7, 0.0, 0.0]))
        with pytest.raises(SimulationDivergedError) as exc:
            step(free_chain, state, ControlTarget(np.zeros(3)), SimConfig(ground=FAR_GROUND), step_index=7)
        assert exc.value.step == 7

    def test_rollout_divergence_carries_time(self, free_chain):
        state = SimState.rest(free_chain, (0.0, 10.0, 0.0)).replace(base_lin_vel=np.array([1e7, 0.0, 0.0]))
        with pytest.raises(SimulationDivergedError) as exc:
            simulate(free_chain, state, _hold(free_chain, 0.2), 0.2, SimConfig(ground=FAR_GROUND),
                     time_offset=1.5)
        assert exc.value.time == pytest.approx(1.5)

    def test_controls_must_cover_duration(self, pendulum):
        with pytest.raises(ContractError, match="cover"):
            simulate(pendulum, SimState.rest(pendulum), _hold(pendulum, 0.2), 0.5, SimConfig())

    def test_controls_dof_checked(self, pendulum):
        with pytest.raises(ContractError, match="DOF"):
            simulate(pendulum, SimState.rest(pendulum), ControlTrajectory.constant(np.zeros(6), 0.2, 0.2),
                     0.2, SimConfig())

    def test_default_frame_rate_is_sim_rate(self, pendulum):
        clip = simulate(pendulum, SimState.rest(pendulum), _hold(pendulum, 0.05), 0.05,
                        SimConfig(ground=FAR_GROUND))
        assert len(clip) == 11
        assert clip.source == ClipSource.SIMULATED


def _crossing_times(values, dt):
    """Interpolated times at which a sampled signal changes sign."""
    k = np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)[0]
    return (k + values[k] / (values[k] - values[k + 1])) * dt


class TestConservation:
    """Tests for momentum, energy and period of unactuated motion."""

    def _tumbling(self, model, rng):
        return SimState.rest(model).replace(q=rng.normal(scale=0.4, size=3), qdot=rng.normal(scale=0.5, size=3),
                                            base_lin_vel=rng.normal(size=3),
                                            base_ang_vel=rng.normal(scale=0.5, size=3))

    def test_momentum_conserved_without_gravity(self, free_chain, rng):
        cfg = SimConfig(gravity=0.0, ground=FAR_GROUND, kp=0.0, kd=0.0)
        s0 = self._tumbling(free_chain, rng)
        clip = simulate(free_chain, s0, _hold(free_chain, 1.0), 1.0, cfg, fps=10.0)
        linear0, angular0 = momentum(free_chain, s0)
        linear1, angular1 = momentum(free_chain, clip.states[-1])
        assert np.linalg.norm(linear1 - linear0) <= 1e-6 * np.linalg.norm(linear0)
        assert np.linalg.norm(angular1 - angular0) <= 1e-6 * np.linalg.norm(angular0)

    def test_linear_momentum_gains_weight_impulse(self, free_chain, rng):
        cfg = SimConfig(ground=FAR_GROUND, kp=0.0, kd=0.0)
        s0 = self._tumbling(free_chain, rng)
        clip = simulate(free_chain, s0, _hold(free_chain, 0.5), 0.5, cfg, fps=10.0)
        expected = momentum(free_chain, s0)[0] + 0.5 * free_chain.total_mass * G
        np.testing.assert_allclose(momentum(free_chain, clip.states[-1])[0], expected, atol=1e-9)

    def test_free_fall_energy_drift(self, free_chain, rng):
        cfg = SimConfig(ground=FAR_GROUND, kp=0.0, kd=0.0)
        s0 = self._tumbling(free_chain, rng).replace(base_position=np.array([0.0, 10.0, 0.0]))
        clip = simulate(free_chain, s0, _hold(free_chain, 1.0), 1.0, cfg, fps=10.0)

        def energy(state):
            return kinetic_energy(free_chain, state) + potential_energy(free_chain, state, G)

        e0 = energy(s0)
        assert abs(energy(clip.states[-1]) - e0) < 0.01 * abs(e0)

    def test_spinning_energy_drift(self, free_chain, rng):
        cfg = SimConfig(dt=1e-3, gravity=0.0, ground=FAR_GROUND, kp=0.0, kd=0.0)
        s0 = self._tumbling(free_chain, rng)
        clip = simulate(free_chain, s0, _hold(free_chain, 1.0), 1.0, cfg, fps=10.0)
        e0 = kinetic_energy(free_chain, s0)
        assert abs(kinetic_energy(free_chain, clip.states[-1]) - e0) < 0.01 * e0

    def test_swinging_energy_drift(self, pendulum):
        cfg = SimConfig(dt=1e-3, ground=FAR_GROUND, kp=0.0, kd=0.0)
        rest = potential_energy(pendulum, SimState.rest(pendulum), G)
        s0 = SimState.rest(pendulum).replace(q=np.array([0.0, 0.0, 0.5]))
        clip = simulate(pendulum, s0, _hold(pendulum, 1.0), 1.0, cfg, fps=10.0)

        def energy(state):
            return kinetic_energy(pendulum, state) + potential_energy(pendulum, state, G) - rest

        e0 = energy(s0)
        assert e0 > 0.0
        assert all(abs(energy(s) - e0) < 0.01 * e0 for s in clip.states)

    def test_base_quaternion_stays_unit(self, free_chain, rng):
        cfg = SimConfig(ground=FAR_GROUND, kp=0.0, kd=0.0)
        s0 = self._tumbling(free_chain, rng).replace(base_ang_vel=np.array([3.0, -5.0, 2.0]))
        clip = simulate(free_chain, s0, _hold(free_chain, 1.0), 1.0, cfg)
        norms = np.array([np.linalg.norm(s.base_orientation) for s in clip.states])
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)

    @pytest.mark.slow
    def test_small_swing_period(self, pendulum):
        cfg = SimConfig(ground=FAR_GROUND, kp=0.0, kd=0.0)
        pivot_inertia = pendulum.link_inertias[1][2, 2] + 1.0 * 0.3 ** 2
        expected = 2.0 * np.pi * np.sqrt(pivot_inertia / (9.8 * 1.0 * 0.3))
        duration = 10.0 * expected
        s0 = SimState.rest(pendulum).replace(q=np.array([0.0, 0.0, 0.05]))
        clip = simulate(pendulum, s0, _hold(pendulum, duration), duration, cfg)
        crossings = _crossing_times(np.array([s.q[2] for s in clip.states]), cfg.dt)
        assert len(crossings) >= 18
        assert 2.0 * np.mean(np.diff(crossings)) == pytest.approx(expected, rel=0.01)


class TestContactDetection:
    """Tests for sample-based foot contact detection."""

    def test_thresholds_by_source(self):
        assert default_contact_threshold(ClipSource.KINEMATIC) == pytest.approx(0.005)
        assert default_contact_threshold(ClipSource.SIMULATED) == pytest.approx(-0.015)

    def test_standing_feet_in_contact(self, stock_model, stock_standing):
        obs = observe(stock_model, [stock_standing] * 3, 30.0)
        clip = clip_from_observations(stock_model, obs)
        flags = detect_foot_contacts(clip, stock_model, GroundPlane())
        assert flags.shape == (3, 2)
        assert flags.all()

    def test_raised_feet_out_of_contact(self, stock_model, stock_standing):
        raised = stock_standing.replace(base_position=stock_standing.base_position + [0.0, 0.05, 0.0])
        clip = clip_from_observations(stock_model, observe(stock_model, [raised] * 2, 30.0))
        assert not detect_foot_contacts(clip, stock_model, GroundPlane()).any()

    def test_simulated_threshold_needs_penetration(self, stock_model, stock_standing):
        clip = clip_from_observations(stock_model, observe(stock_model, [stock_standing] * 2, 30.0))
        assert not detect_foot_contacts(clip, stock_model, GroundPlane(), d=-0.015).any()
