"""
Body construction service for the PhysMotion pipeline.
Fits capsules and boxes to per-link surface point sets, derives mass and
inertia from primitive volume and an anatomical mass distribution, and
assembles the articulated BodyModel.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from config import PRIMITIVE_SURFACE_SAMPLES
from enums import PrimitiveKind
from exceptions import ContractError, IllPosedError, ValidationError
from motion.models import BodyModel, JointSpec, LandmarkAttachment, Primitive
from utils.logger import logger
from utils.rotations import exp_map_to_matrix, make_transform
from utils.validators import ensure, validate_mass_fractions

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))
MIN_SIZE = 1e-4


@dataclass(frozen=True, eq=False)
class LinkPointSet:
    """Surface samples of one link's mesh segment."""
    link: Union[int, str]
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ContractError(f"Link {self.link}: points must be (n, 3), got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True, eq=False)
class MassDistribution:
    """Per-link fraction of total body mass."""
    fractions: Mapping[str, float]
    total_mass: float

    def __post_init__(self):
        object.__setattr__(self, "fractions", dict(self.fractions))
        if not self.total_mass > 0:
            raise ValidationError("total_mass must be positive")
        ensure(validate_mass_fractions(list(self.fractions.values())), context="mass distribution")

    def link_mass(self, link_name: str) -> float:
        if link_name not in self.fractions:
            raise ValidationError(f"Mass distribution does not cover link '{link_name}'")
        return self.fractions[link_name] * self.total_mass


@dataclass(frozen=True, eq=False)
class PrimitiveFit:
    """Fitted primitive shape in the frame of the input points."""
    kind: PrimitiveKind
    size: Tuple[float, ...]
    transform: np.ndarray
    loss: float
    converged: bool = True
    iterations: int = 0
    loss_history: List[float] = field(default_factory=list)

    @property
    def warning(self) -> bool:
        return not self.converged


# ==================== Geometry ====================

def primitive_volume(kind: PrimitiveKind, size: Sequence[float]) -> float:
    if PrimitiveKind(kind) == PrimitiveKind.CAPSULE:
        r, length = size
        return np.pi * r * r * length + 4.0 / 3.0 * np.pi * r ** 3
    w, h, d = size
    return w * h * d


def primitive_area(kind: PrimitiveKind, size: Sequence[float]) -> float:
    if PrimitiveKind(kind) == PrimitiveKind.CAPSULE:
        r, length = size
        return 2.0 * np.pi * r * length + 4.0 * np.pi * r * r
    w, h, d = size
    return 2.0 * (w * h + w * d + h * d)


def surface_distance(kind: PrimitiveKind, size: Sequence[float], local_points: np.ndarray) -> np.ndarray:
    """Signed distance of primitive-frame points to the primitive surface (negative inside)."""
    p = np.asarray(local_points, dtype=float)
    if PrimitiveKind(kind) == PrimitiveKind.CAPSULE:
        r, length = size
        y = np.clip(p[:, 1], -0.5 * length, 0.5 * length)
        nearest = np.stack([np.zeros_like(y), y, np.zeros_like(y)], axis=1)
        return np.linalg.norm(p - nearest, axis=1) - r
    half = 0.5 * np.asarray(size, dtype=float)
    q = np.abs(p) - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(q.max(axis=1), 0.0)
    return outside + inside


def _sphere_cap_points(n: int, upper: bool) -> np.ndarray:
    """n Fibonacci points on a unit hemisphere (y >= 0 when upper)."""
    i = np.arange(n) + 0.5
    y = i / n
    radius = np.sqrt(np.maximum(0.0, 1.0 - y * y))
    theta = GOLDEN_ANGLE * i
    pts = np.stack([radius * np.cos(theta), y, radius * np.sin(theta)], axis=1)
    if not upper:
        pts[:, 1] *= -1.0
    return pts


@dataclass(frozen=True)
class SampleLayout:
    """Sample counts per surface patch; held fixed while a fit runs."""
    counts: Tuple[int, ...]


def sample_layout(kind: PrimitiveKind, size: Sequence[float], n: int = PRIMITIVE_SURFACE_SAMPLES) -> SampleLayout:
    """Split n samples across surface patches in proportion to their area."""
    if PrimitiveKind(kind) == PrimitiveKind.CAPSULE:
        r, length = size
        areas = np.array([2.0 * np.pi * r * length, 2.0 * np.pi * r * r, 2.0 * np.pi * r * r])
    else:
        w, h, d = size
        areas = np.array([h * d, h * d, w * d, w * d, w * h, w * h])
    counts = np.maximum(1, np.round(n * areas / areas.sum()).astype(int))
    return SampleLayout(tuple(int(c) for c in counts))


def _grid(count: int, aspect: float) -> Tuple[np.ndarray, np.ndarray]:
    """Cell-centred grid of about `count` points on the unit square, aspect = u/v extent."""
    nu = max(1, int(round(np.sqrt(count * max(aspect, 1e-6)))))
    nv = max(1, int(np.ceil(count / nu)))
    u = (np.arange(nu) + 0.5) / nu
    v = (np.arange(nv) + 0.5) / nv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    return uu.ravel()[:count], vv.ravel()[:count]


def sample_surface(kind: PrimitiveKind, size: Sequence[float],
                   layout: Optional[SampleLayout] = None,
                   n: int = PRIMITIVE_SURFACE_SAMPLES) -> np.ndarray:
    """
    Deterministic, area-uniform surface samples in the primitive frame.

    Capsules use a regular grid on the cylinder and Fibonacci points on the
    end caps; boxes use a grid per face.
    """
    kind = PrimitiveKind(kind)
    layout = layout or sample_layout(kind, size, n)
    if kind == PrimitiveKind.CAPSULE:
        r, length = size
        n_cyl, n_top, n_bottom = layout.counts
        u, v = _grid(n_cyl, 2.0 * np.pi * r / max(length, MIN_SIZE))
        theta = 2.0 * np.pi * u
        cyl = np.stack([r * np.cos(theta), (v - 0.5) * length, r * np.sin(theta)], axis=1)
        top = _sphere_cap_points(n_top, True) * r + [0.0, 0.5 * length, 0.0]
        bottom = _sphere_cap_points(n_bottom, False) * r - [0.0, 0.5 * length, 0.0]
        return np.concatenate([cyl, top, bottom])
    half = 0.5 * np.asarray(size, dtype=float)
    faces = []
    # (normal axis, sign) for +x, -x, +y, -y, +z, -z
    for face, count in enumerate(layout.counts):
        axis, sign = face // 2, (1.0 if face % 2 == 0 else -1.0)
        a, b = [k for k in range(3) if k != axis]
        u, v = _grid(count, half[a] / half[b])
        pts = np.zeros((len(u), 3))
        pts[:, axis] = sign * half[axis]
        pts[:, a] = (2.0 * u - 1.0) * half[a]
        pts[:, b] = (2.0 * v - 1.0) * half[b]
        faces.append(pts)
    return np.concatenate(faces)


# ==================== Fitting ====================

def _check_point_set(points: np.ndarray, link) -> None:
    if points.shape[0] < 4:
        raise IllPosedError(f"Link {link}: need at least 4 points, got {points.shape[0]}")
    centered = points - points.mean(axis=0)
    singular = np.linalg.svd(centered, compute_uv=False)
    if singular[0] == 0 or singular[-1] <= 1e-9 * singular[0]:
        raise IllPosedError(f"Link {link}: points are coplanar, the fit is ill-posed")


def principal_frame(points: np.ndarray) -> np.ndarray:
    """
    Right-handed principal axes (columns) of a point cloud, variance descending.
    Axis signs follow the sign of the third moment along each axis.
    """
    centered = points - points.mean(axis=0)
    _, vectors = np.linalg.eigh(centered.T @ centered)
    axes = vectors[:, ::-1].copy()
    for k in range(2):
        skew = np.sum((centered @ axes[:, k]) ** 3)
        if skew < 0:
            axes[:, k] *= -1.0
    axes[:, 2] = np.cross(axes[:, 0], axes[:, 1])
    return axes


def _initial_guess(points: np.ndarray, kind: PrimitiveKind, rotation: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Initial (size, centre) for a primitive with the given axes."""
    local = (points - points.mean(axis=0)) @ rotation
    lo, hi = local.min(axis=0), local.max(axis=0)
    center = points.mean(axis=0) + rotation @ (0.5 * (lo + hi))
    extent = np.maximum(hi - lo, MIN_SIZE)
    if kind == PrimitiveKind.BOX:
        return extent, center
    local = (points - center) @ rotation
    radial = np.linalg.norm(local[:, [0, 2]], axis=1)
    r = max(float(np.percentile(radial, 90)), MIN_SIZE)
    length = max(float(extent[1] - 2.0 * r), MIN_SIZE)
    return np.array([r, length]), center


def _capsule_axes(points: np.ndarray) -> np.ndarray:
    """Principal frame reordered so the dominant axis becomes local y."""
    axes = principal_frame(points)
    frame = np.stack([axes[:, 1], axes[:, 0], -axes[:, 2]], axis=1)
    return frame


def _symmetric_distance(points: np.ndarray, tree: cKDTree, kind: PrimitiveKind, size: Sequence[float],
                        rotation: np.ndarray, center: np.ndarray, layout: SampleLayout) -> float:
    local = (points - center) @ rotation
    to_surface = np.abs(surface_distance(kind, size, local))
    samples = sample_surface(kind, size, layout) @ rotation.T + center
    to_points, _ = tree.query(samples)
    return float(to_surface.sum() + to_points.sum())


def fit_loss(kind: PrimitiveKind, size: Sequence[float], rotation: np.ndarray, center: np.ndarray,
             points: np.ndarray, layout: Optional[SampleLayout] = None) -> float:
    """
    Sum of unsquared nearest-point distances in both directions: every point
    to the primitive surface, and every surface sample to its nearest point.
    """
    kind = PrimitiveKind(kind)
    pts = np.asarray(points, dtype=float)
    layout = layout or sample_layout(kind, size)
    return _symmetric_distance(pts, cKDTree(pts), kind, np.asarray(size, dtype=float),
                               np.asarray(rotation, dtype=float), np.asarray(center, dtype=float), layout)


class _FitProblem:
    """fit_loss for one primitive against a point cloud, with the tree and sample layout held fixed."""

    def __init__(self, points: np.ndarray, kind: PrimitiveKind, layout: SampleLayout):
        self.points = points
        self.kind = kind
        self.layout = layout
        self.tree = cKDTree(points)

    def loss(self, size: np.ndarray, rotation: np.ndarray, center: np.ndarray) -> float:
        return _symmetric_distance(self.points, self.tree, self.kind, size, rotation, center, self.layout)


def fit_primitive(points: Union[LinkPointSet, np.ndarray], kind: PrimitiveKind,
                  samples: int = PRIMITIVE_SURFACE_SAMPLES, max_iterations: int = 300,
                  tolerance: float = 1e-6) -> PrimitiveFit:
    """
    Fit a capsule or box to surface points by minimizing fit_loss, the
    summed unsquared nearest-point distances in both directions.

    The transform is initialized from the principal axes; size, centre and
    orientation are then refined by coordinate descent with step halving, so
    the loss never increases.

    Raises:
        IllPosedError: fewer than 4 points or coplanar points
    """
    link = points.link if isinstance(points, LinkPointSet) else "-"
    pts = points.points if isinstance(points, LinkPointSet) else np.asarray(points, dtype=float)
    kind = PrimitiveKind(kind)
    if samples < PRIMITIVE_SURFACE_SAMPLES:
        raise ContractError(f"At least {PRIMITIVE_SURFACE_SAMPLES} surface samples are required")
    _check_point_set(pts, link)

    candidates = [_capsule_axes(pts) if kind == PrimitiveKind.CAPSULE else principal_frame(pts)]
    if kind == PrimitiveKind.BOX:
        candidates.append(np.eye(3))

    best = None
    for rotation in candidates:
        size, center = _initial_guess(pts, kind, rotation)
        problem = _FitProblem(pts, kind, sample_layout(kind, size, samples))
        loss = problem.loss(size, rotation, center)
        if best is None or loss < best[0]:
            best = (loss, size, center, rotation, problem)
    loss, size, center, rotation, problem = best

    scale = float(np.max(np.ptp(pts, axis=0)))
    n_size = len(size)
    # parameters: size, centre offset (local axes), rotation increment (local axes)
    steps = np.concatenate([np.full(n_size, 0.05 * scale), np.full(3, 0.02 * scale), np.full(3, 0.05)])
    min_steps = np.concatenate([np.full(n_size + 3, tolerance * scale), np.full(3, tolerance)])
    history = [loss]
    converged = False
    iteration = 0
    for iteration in range(1, max_iterations + 1):
        improved = False
        for k in range(len(steps)):
            for sign in (1.0, -1.0):
                delta = sign * steps[k]
                trial_size, trial_center, trial_rot = size.copy(), center, rotation
                if k < n_size:
                    trial_size[k] += delta
                    if trial_size[k] < MIN_SIZE:
                        continue
                elif k < n_size + 3:
                    trial_center = center + rotation[:, k - n_size] * delta
                else:
                    axis = np.zeros(3)
                    axis[k - n_size - 3] = delta
                    trial_rot = rotation @ exp_map_to_matrix(axis)
                trial = problem.loss(trial_size, trial_rot, trial_center)
                if trial < loss:
                    loss, size, center, rotation = trial, trial_size, trial_center, trial_rot
                    steps[k] *= 1.5
                    improved = True
                    break
            else:
                steps[k] *= 0.5
        history.append(loss)
        if not improved and np.all(steps < min_steps):
            converged = True
            break

    if not converged:
        logger.warning(f"Primitive fit for link {link} stopped after {iteration} iterations "
                       f"without converging (loss {loss:.3e})")
    return PrimitiveFit(kind=kind, size=tuple(float(s) for s in size),
                        transform=make_transform(rotation, center), loss=loss,
                        converged=converged, iterations=iteration, loss_history=history)


# ==================== Mass properties ====================

def principal_inertia(kind: PrimitiveKind, size: Sequence[float], mass: float) -> np.ndarray:
    """Diagonal inertia about the centre in the primitive's own axes."""
    kind = PrimitiveKind(kind)
    if kind == PrimitiveKind.BOX:
        w, h, d = size
        return mass / 12.0 * np.diag([h * h + d * d, w * w + d * d, w * w + h * h])
    r, length = size
    v_cyl = np.pi * r * r * length
    v_sph = 4.0 / 3.0 * np.pi * r ** 3
    m_c = mass * v_cyl / (v_cyl + v_sph)
    m_s = mass - m_c
    axial = m_c * r * r / 2.0 + m_s * 2.0 * r * r / 5.0
    perp = (m_c * (r * r / 4.0 + length * length / 12.0)
            + m_s * (2.0 * r * r / 5.0 + length * length / 4.0 + 3.0 * length * r / 8.0))
    return np.diag([perp, axial, perp])


def compute_mass_properties(shape, mass: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Closed-form inertia about the centre (link-frame axes) and the COM offset.

    `shape` is any object with kind, size and transform (Primitive or
    PrimitiveFit).

    Raises:
        ContractError: non-positive mass or size
    """
    if not mass > 0:
        raise ContractError("mass must be positive")
    if any(s <= 0 for s in shape.size):
        raise ContractError(f"Primitive size parameters must be positive: {tuple(shape.size)}")
    rotation = np.asarray(shape.transform)[:3, :3]
    inertia = rotation @ principal_inertia(shape.kind, shape.size, mass) @ rotation.T
    return 0.5 * (inertia + inertia.T), np.array(shape.transform)[:3, 3].copy()


def make_primitive(kind: PrimitiveKind, size: Sequence[float], transform: np.ndarray,
                   link: int, mass: float, name: str = "") -> Primitive:
    """Primitive with inertia derived from its shape and mass."""
    fit = PrimitiveFit(PrimitiveKind(kind), tuple(size), np.asarray(transform, dtype=float), 0.0)
    inertia, _ = compute_mass_properties(fit, mass)
    return Primitive(kind=kind, size=tuple(size), transform=transform, link=link,
                     mass=mass, inertia=inertia, name=name)


# ==================== Assembly ====================

def assemble_body(fits: Mapping[int, Union[PrimitiveFit, Sequence[PrimitiveFit]]],
                  joints: Sequence[JointSpec], dist: MassDistribution,
                  link_names: Sequence[str], base_link: int = 0,
                  landmarks: Sequence[LandmarkAttachment] = (),
                  foot_links: Sequence[int] = (), fixed_base: bool = False) -> BodyModel:
    """
    Build a BodyModel from fitted primitives (link-frame transforms).

    Link mass is fraction x total_mass; a link with several primitives
    splits its mass by volume.

    Raises:
        ValidationError: a link has no primitive or no mass fraction
        StructureError: the joints do not form a tree rooted at base_link
    """
    primitives: List[Primitive] = []
    for link, name in enumerate(link_names):
        link_fits = fits.get(link)
        if link_fits is None:
            raise ValidationError(f"No primitive fitted for link '{name}'")
        if isinstance(link_fits, PrimitiveFit):
            link_fits = [link_fits]
        link_mass = dist.link_mass(name)
        if not link_mass > 0:
            raise ValidationError(f"Link '{name}' has zero mass fraction")
        volumes = np.array([primitive_volume(f.kind, f.size) for f in link_fits])
        for k, (fit, volume) in enumerate(zip(link_fits, volumes)):
            suffix = "" if len(link_fits) == 1 else f"_{k}"
            primitives.append(make_primitive(fit.kind, fit.size, fit.transform, link,
                                             link_mass * volume / volumes.sum(), name=f"{name}{suffix}"))
    model = BodyModel(primitives=primitives, joints=joints, base_link=base_link,
                      landmarks=landmarks, link_names=tuple(link_names),
                      foot_links=tuple(foot_links), fixed_base=fixed_base)
    logger.info(f"Assembled body: {model.n_links} links, {len(primitives)} primitives, "
                f"{model.dof_count} DOF, {model.total_mass:.3f} kg")
    return model


def build_from_documents(point_sets, topology, total_mass: float,
                         default_fractions: Optional[Mapping[str, float]] = None) -> BodyModel:
    """
    Build a body from a point-set document and a topology document.

    Points and joint centres are given in a world rest pose. Every child link
    frame sits at its joint centre with world-aligned axes; the base link
    frame sits at topology.base_origin.
    """
    names = [topology.base_link] + [j.child for j in topology.joints]
    if len(set(names)) != len(names):
        raise ValidationError("Link names in the topology must be unique")
    index = {name: k for k, name in enumerate(names)}
    origins = {topology.base_link: np.asarray(topology.base_origin, dtype=float)}
    for j in topology.joints:
        origins[j.child] = np.asarray(j.center, dtype=float)

    joints = []
    for j in topology.joints:
        if j.parent not in index:
            raise ValidationError(f"Joint '{j.name}' references unknown parent link '{j.parent}'")
        joints.append(JointSpec(
            parent=index[j.parent], child=index[j.child],
            frame_in_parent=make_transform(None, origins[j.child] - origins[j.parent]),
            frame_in_child=np.eye(4), lower=j.lower, upper=j.upper,
            torque_limit=j.torque_limit, stiffness=j.stiffness, name=j.name or j.child,
        ))

    fits: Dict[int, List[PrimitiveFit]] = {}
    for entry in point_sets.links:
        if entry.link not in index:
            raise ValidationError(f"Point set for unknown link '{entry.link}'")
        local = np.asarray(entry.points, dtype=float) - origins[entry.link]
        fit = fit_primitive(LinkPointSet(entry.link, local), entry.kind)
        logger.info(f"Fitted {fit.kind.value} to '{entry.link}': size={np.round(fit.size, 4).tolist()} "
                    f"loss={fit.loss:.3e}{' (not converged)' if fit.warning else ''}")
        fits.setdefault(index[entry.link], []).append(fit)

    fractions = dict(topology.mass_fractions) or dict(default_fractions or {})
    if abs(sum(fractions.values()) - 1.0) > 1e-9 or set(fractions) - set(names):
        raise ValidationError("Mass fractions must cover exactly the topology's links and sum to 1")
    dist = MassDistribution({name: fractions.get(name, 0.0) for name in names}, total_mass)
    landmarks = []
    for lm in topology.landmarks:
        if lm.link not in index:
            raise ValidationError(f"Landmark '{lm.name}' references unknown link '{lm.link}'")
        landmarks.append(LandmarkAttachment(index[lm.link], np.asarray(lm.position) - origins[lm.link], lm.name))
    feet = [index[name] for name in topology.foot_links]
    return assemble_body(fits, joints, dist, names, base_link=0, landmarks=landmarks, foot_links=feet)
