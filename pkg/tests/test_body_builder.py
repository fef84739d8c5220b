"""
Unit tests for primitive fitting, mass properties and body assembly.
"""
import numpy as np
import pytest

from enums import PrimitiveKind
from exceptions import ContractError, IllPosedError, ValidationError
from motion.schemas import PointSetsFileSchema, TopologyFileSchema
from services.body_builder import (
    LinkPointSet, MassDistribution, PrimitiveFit, assemble_body, build_from_documents,
    compute_mass_properties, fit_primitive, primitive_area, primitive_volume, principal_inertia,
    fit_loss, sample_layout, sample_surface, surface_distance,
)
from motion.models import JointSpec
from utils.rotations import exp_map_to_matrix, make_transform

TILT = exp_map_to_matrix([0.3, 0.1, -0.2])


class TestGeometry:
    """Tests for closed-form primitive geometry."""

    def test_capsule_of_zero_length_is_sphere(self):
        assert primitive_volume(PrimitiveKind.CAPSULE, (1.0, 0.0)) == pytest.approx(4.0 / 3.0 * np.pi)
        assert primitive_area(PrimitiveKind.CAPSULE, (1.0, 0.0)) == pytest.approx(4.0 * np.pi)

    def test_box_volume_and_area(self):
        assert primitive_volume(PrimitiveKind.BOX, (1.0, 2.0, 3.0)) == pytest.approx(6.0)
        assert primitive_area(PrimitiveKind.BOX, (1.0, 2.0, 3.0)) == pytest.approx(22.0)

    def test_capsule_surface_distance(self):
        pts = np.array([[0.2, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.3, 0.0]])
        np.testing.assert_allclose(surface_distance(PrimitiveKind.CAPSULE, (0.05, 0.3), pts),
                                   [0.15, -0.05, 0.1], atol=1e-12)

    def test_box_surface_distance(self):
        pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        np.testing.assert_allclose(surface_distance(PrimitiveKind.BOX, (0.2, 0.4, 0.6), pts),
                                   [-0.1, 0.9], atol=1e-12)

    @pytest.mark.parametrize("kind,size", [
        (PrimitiveKind.CAPSULE, (0.05, 0.3)),
        (PrimitiveKind.BOX, (0.1, 0.2, 0.3)),
    ])
    def test_samples_lie_on_surface(self, kind, size):
        pts = sample_surface(kind, size, n=500)
        assert len(pts) >= 450
        np.testing.assert_allclose(surface_distance(kind, size, pts), 0.0, atol=1e-12)

    def test_samples_are_deterministic(self):
        a = sample_surface(PrimitiveKind.CAPSULE, (0.05, 0.3))
        b = sample_surface(PrimitiveKind.CAPSULE, (0.05, 0.3))
        np.testing.assert_array_equal(a, b)


class TestFitPrimitive:
    """Tests for fit_primitive."""

    def test_capsule_recovered(self):
        center = np.array([0.1, 0.9, -0.2])
        pts = sample_surface(PrimitiveKind.CAPSULE, (0.05, 0.3), n=800) @ TILT.T + center
        fit = fit_primitive(LinkPointSet("shin", pts), PrimitiveKind.CAPSULE, max_iterations=100)
        radius, length = fit.size
        assert radius == pytest.approx(0.05, abs=0.005)
        assert length == pytest.approx(0.3, abs=0.02)
        np.testing.assert_allclose(fit.transform[:3, 3], center, atol=0.01)
        assert abs(fit.transform[:3, 1] @ TILT[:, 1]) > 0.99
        assert fit.loss / (len(pts) + 500) < 0.01

    def test_box_recovered(self):
        pts = sample_surface(PrimitiveKind.BOX, (0.1, 0.2, 0.3), n=600) @ TILT.T
        fit = fit_primitive(pts, PrimitiveKind.BOX, max_iterations=100)
        np.testing.assert_allclose(sorted(fit.size), [0.1, 0.2, 0.3], atol=0.01)
        assert fit.loss / (len(pts) + 500) < 0.01

    def test_loss_never_increases(self):
        rng = np.random.default_rng(3)
        pts = sample_surface(PrimitiveKind.CAPSULE, (0.06, 0.2), n=600) + rng.normal(scale=0.003, size=(1, 3))
        fit = fit_primitive(pts, PrimitiveKind.CAPSULE, max_iterations=30)
        history = np.array(fit.loss_history)
        assert np.all(np.diff(history) <= 0.0)
        assert fit.loss == history[-1]
        assert fit.iterations <= 30

    def test_loss_sums_unsquared_distances(self):
        # zero-length capsule: every surface sample lies 0.1 from the centre
        size = (0.1, 0.0)
        n_samples = len(sample_surface(PrimitiveKind.CAPSULE, size, sample_layout(PrimitiveKind.CAPSULE, size)))
        loss = fit_loss(PrimitiveKind.CAPSULE, size, np.eye(3), np.zeros(3), np.zeros((1, 3)))
        assert loss == pytest.approx(0.1 * (1 + n_samples))

    def test_loss_vanishes_on_own_samples(self):
        size, center = (0.1, 0.2, 0.3), np.array([0.4, 1.0, -0.3])
        pts = sample_surface(PrimitiveKind.BOX, size) @ TILT.T + center
        assert fit_loss(PrimitiveKind.BOX, size, TILT, center, pts) == pytest.approx(0.0, abs=1e-9)

    def test_too_few_points(self):
        with pytest.raises(IllPosedError, match="at least 4"):
            fit_primitive(np.eye(3), PrimitiveKind.BOX)

    def test_coplanar_points(self):
        rng = np.random.default_rng(0)
        pts = np.column_stack([rng.normal(size=(50, 2)), np.zeros(50)])
        with pytest.raises(IllPosedError, match="coplanar"):
            fit_primitive(pts, PrimitiveKind.CAPSULE)

    def test_sample_count_floor(self):
        pts = sample_surface(PrimitiveKind.BOX, (0.1, 0.2, 0.3))
        with pytest.raises(ContractError):
            fit_primitive(pts, PrimitiveKind.BOX, samples=100)

    def test_point_set_shape(self):
        with pytest.raises(ContractError):
            LinkPointSet("arm", np.zeros((10, 2)))

    def test_warning_flag(self):
        fit = PrimitiveFit(PrimitiveKind.BOX, (1.0, 1.0, 1.0), np.eye(4), 0.1, converged=False)
        assert fit.warning


class TestMassProperties:
    """Tests for closed-form inertia."""

    def test_box_inertia(self):
        np.testing.assert_allclose(principal_inertia(PrimitiveKind.BOX, (1.0, 2.0, 3.0), 12.0),
                                   np.diag([13.0, 10.0, 5.0]))

    def test_short_capsule_is_sphere(self):
        inertia = principal_inertia(PrimitiveKind.CAPSULE, (0.1, 1e-9), 2.0)
        np.testing.assert_allclose(np.diag(inertia), 0.4 * 2.0 * 0.01, rtol=1e-6)

    def test_rotated_box(self):
        shape = PrimitiveFit(PrimitiveKind.BOX, (1.0, 2.0, 3.0),
                             make_transform(exp_map_to_matrix([0.0, 0.0, np.pi / 2]), [0.1, 0.2, 0.3]), 0.0)
        inertia, com = compute_mass_properties(shape, 12.0)
        np.testing.assert_allclose(inertia, np.diag([10.0, 13.0, 5.0]), atol=1e-9)
        np.testing.assert_allclose(com, [0.1, 0.2, 0.3])

    def test_invalid_inputs(self):
        shape = PrimitiveFit(PrimitiveKind.BOX, (1.0, 0.0, 3.0), np.eye(4), 0.0)
        with pytest.raises(ContractError):
            compute_mass_properties(shape, 1.0)
        shape = PrimitiveFit(PrimitiveKind.BOX, (1.0, 1.0, 1.0), np.eye(4), 0.0)
        with pytest.raises(ContractError):
            compute_mass_properties(shape, 0.0)


def _joint(parent, child, offset):
    return JointSpec(parent=parent, child=child, frame_in_parent=make_transform(None, offset),
                     frame_in_child=np.eye(4), lower=np.full(3, -1.0), upper=np.full(3, 1.0),
                     torque_limit=np.full(3, 100.0))


class TestAssembly:
    """Tests for assemble_body and MassDistribution."""

    def test_mass_split_by_volume(self):
        small = PrimitiveFit(PrimitiveKind.BOX, (0.1, 0.1, 0.1), np.eye(4), 0.0)
        large = PrimitiveFit(PrimitiveKind.BOX, (0.2, 0.1, 0.1), make_transform(None, [0.0, 0.2, 0.0]), 0.0)
        arm = PrimitiveFit(PrimitiveKind.CAPSULE, (0.03, 0.2), np.eye(4), 0.0)
        model = assemble_body({0: [small, large], 1: arm}, [_joint(0, 1, [0.0, -0.1, 0.0])],
                              MassDistribution({"torso": 0.75, "arm": 0.25}, 60.0), ["torso", "arm"])
        masses = [p.mass for p in model.primitives]
        np.testing.assert_allclose(masses, [15.0, 30.0, 15.0])
        assert model.total_mass == pytest.approx(60.0)
        assert model.primitives[0].name == "torso_0"

    def test_missing_primitive(self):
        arm = PrimitiveFit(PrimitiveKind.CAPSULE, (0.03, 0.2), np.eye(4), 0.0)
        with pytest.raises(ValidationError, match="No primitive"):
            assemble_body({1: arm}, [_joint(0, 1, [0.0, -0.1, 0.0])],
                          MassDistribution({"torso": 0.5, "arm": 0.5}, 10.0), ["torso", "arm"])

    def test_zero_fraction(self):
        fits = {0: PrimitiveFit(PrimitiveKind.BOX, (0.1, 0.1, 0.1), np.eye(4), 0.0),
                1: PrimitiveFit(PrimitiveKind.CAPSULE, (0.03, 0.2), np.eye(4), 0.0)}
        with pytest.raises(ValidationError, match="zero mass"):
            assemble_body(fits, [_joint(0, 1, [0.0, -0.1, 0.0])],
                          MassDistribution({"torso": 1.0, "arm": 0.0}, 10.0), ["torso", "arm"])

    def test_distribution_checks(self):
        with pytest.raises(ValidationError):
            MassDistribution({"a": 0.5, "b": 0.4}, 10.0)
        with pytest.raises(ValidationError):
            MassDistribution({"a": 1.0}, 0.0)
        with pytest.raises(ValidationError, match="does not cover"):
            MassDistribution({"a": 1.0}, 10.0).link_mass("b")


def _documents(fractions=None):
    torso = sample_surface(PrimitiveKind.BOX, (0.3, 0.4, 0.2), n=500) + [0.0, 1.2, 0.0]
    leg = sample_surface(PrimitiveKind.CAPSULE, (0.06, 0.5), n=500) + [0.0, 0.7, 0.0]
    points = PointSetsFileSchema(links=[
        {"link": "torso", "kind": "box", "points": torso.tolist()},
        {"link": "leg", "kind": "capsule", "points": leg.tolist()},
    ])
    topology = TopologyFileSchema(
        base_link="torso", base_origin=[0.0, 1.2, 0.0],
        joints=[{"name": "hip", "parent": "torso", "child": "leg", "center": [0.0, 1.0, 0.0],
                 "lower": [-1.0, -1.0, -1.0], "upper": [1.0, 1.0, 1.0], "torque_limit": [200.0, 200.0, 200.0]}],
        mass_fractions=fractions if fractions is not None else {"torso": 0.7, "leg": 0.3},
        foot_links=["leg"],
        landmarks=[{"name": "heel", "link": "leg", "position": [0.0, 0.39, 0.0]}],
    )
    return points, topology


class TestBuildFromDocuments:
    """Tests for building a body from point-set and topology documents."""

    def test_builds_two_link_body(self):
        points, topology = _documents()
        model = build_from_documents(points, topology, total_mass=50.0)
        assert model.link_names == ("torso", "leg")
        assert model.dof_count == 3
        assert model.total_mass == pytest.approx(50.0)
        assert model.foot_links == (1,)
        np.testing.assert_allclose(model.joints[0].frame_in_parent[:3, 3], [0.0, -0.2, 0.0])
        np.testing.assert_allclose(model.landmarks[0].offset, [0.0, -0.61, 0.0])
        # leg capsule centred 0.3 m below the hip
        leg = model.primitives_of_link(1)[0]
        np.testing.assert_allclose(leg.center, [0.0, -0.3, 0.0], atol=0.01)

    def test_fractions_must_sum_to_one(self):
        points, topology = _documents({"torso": 0.7, "leg": 0.2})
        with pytest.raises(ValidationError, match="sum to 1"):
            build_from_documents(points, topology, total_mass=50.0)

    def test_unknown_link_in_points(self):
        points, topology = _documents()
        points.links[1].link = "arm"
        with pytest.raises(ValidationError, match="unknown link"):
            build_from_documents(points, topology, total_mass=50.0)
