"""
Contact handling for the PhysMotion pipeline.
Collects candidate contact points between the character's primitives and the
ground plane or static boxes, and resolves contact impulses with projected
Gauss-Seidel on the Delassus operator under a friction pyramid.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import BAUMGARTE, CONTACT_MARGIN
from enums import PrimitiveKind
from motion.kinematics import LinkPoses
from motion.models import BodyModel, GroundPlane, StaticBox

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ContactPoint:
    """One candidate contact between a body point and an obstacle."""
    link: int
    point: np.ndarray       # world contact point on the body surface
    normal: np.ndarray      # unit obstacle normal, pointing out of the obstacle
    distance: float         # signed gap along the normal (negative = penetration)
    obstacle: int = -1      # -1 ground, otherwise static box index


@dataclass(frozen=True, eq=False)
class ContactRecord:
    """Impulses applied at one step, kept for diagnostics."""
    step: int
    links: np.ndarray
    normal_impulses: np.ndarray
    tangent_impulses: np.ndarray    # (contacts, 2)
    friction: float

    def max_cone_violation(self) -> float:
        """Largest ||tangent|| - mu * normal over contacts (<= 0 when inside the cone)."""
        if self.normal_impulses.size == 0:
            return 0.0
        tangent = np.linalg.norm(self.tangent_impulses, axis=1)
        return float(np.max(tangent - self.friction * self.normal_impulses))


def support_spheres(model: BodyModel) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Link-frame sphere centres, radii and links covering every primitive's
    contact features: the two end spheres of a capsule, the eight corners
    (radius 0) of a box.
    """
    centers, radii, links = [], [], []
    for p in model.primitives:
        rot, center = p.rotation, p.center
        if p.kind == PrimitiveKind.CAPSULE:
            r, length = p.size
            for sign in (1.0, -1.0):
                centers.append(center + rot[:, 1] * sign * 0.5 * length)
                radii.append(r)
                links.append(p.link)
        else:
            half = 0.5 * np.asarray(p.size)
            for sx in (1.0, -1.0):
                for sy in (1.0, -1.0):
                    for sz in (1.0, -1.0):
                        centers.append(center + rot @ (half * [sx, sy, sz]))
                        radii.append(0.0)
                        links.append(p.link)
    return np.array(centers).reshape(-1, 3), np.array(radii), np.array(links, dtype=int)


def box_signed_distance(box: StaticBox, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Signed distance to a static box and the outward unit normal at each point."""
    rot, origin = box.transform[:3, :3], box.transform[:3, 3]
    local = (np.asarray(points) - origin) @ rot
    q = np.abs(local) - box.half_extents
    outside = np.maximum(q, 0.0)
    out_norm = np.linalg.norm(outside, axis=1)
    inside = np.minimum(q.max(axis=1), 0.0)
    distance = out_norm + inside
    normal_local = np.where(out_norm[:, None] > 0, outside / np.maximum(out_norm, 1e-12)[:, None], 0.0)
    face = np.argmax(q, axis=1)
    inner = out_norm <= 0
    normal_local[inner, face[inner]] = 1.0
    normal_local *= np.sign(local) + (local == 0)
    return distance, normal_local @ rot.T


def collect_contacts(model: BodyModel, poses: LinkPoses, plane: GroundPlane,
                     boxes: Sequence[StaticBox] = (), margin: float = CONTACT_MARGIN) -> List[ContactPoint]:
    """Candidate contacts whose gap is below `margin`."""
    centers, radii, links = support_spheres(model)
    world = np.einsum("pij,pj->pi", poses.rotations[links], centers) + poses.positions[links]
    contacts: List[ContactPoint] = []
    normal = plane.normal
    gaps = plane.signed_distance(world) - radii
    for i in np.flatnonzero(gaps < margin):
        contacts.append(ContactPoint(int(links[i]), world[i] - radii[i] * normal, normal, float(gaps[i])))
    for b, box in enumerate(boxes):
        dist, normals = box_signed_distance(box, world)
        gaps = dist - radii
        for i in np.flatnonzero(gaps < margin):
            contacts.append(ContactPoint(int(links[i]), world[i] - radii[i] * normals[i],
                                         normals[i], float(gaps[i]), obstacle=b))
    return contacts


def tangent_basis(normal: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
    t1 = np.cross(normal, helper)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(normal, t1)


def contact_frames(contacts: Sequence[ContactPoint]) -> np.ndarray:
    """(contacts, 3, 3) rows: normal, tangent 1, tangent 2."""
    frames = np.zeros((len(contacts), 3, 3))
    for i, c in enumerate(contacts):
        t1, t2 = tangent_basis(c.normal)
        frames[i] = np.stack([c.normal, t1, t2])
    return frames


def normal_velocity_targets(distances: np.ndarray, dt: float, slop: float,
                            baumgarte: float = BAUMGARTE) -> np.ndarray:
    """
    Minimum post-step normal velocity per contact: open gaps may close to zero
    within the step, penetration beyond the slop is pushed out gradually.
    """
    distances = np.asarray(distances, dtype=float)
    closing = -distances / dt
    push = baumgarte * np.maximum(0.0, -distances - slop) / dt
    return np.where(distances >= 0.0, closing, push)


def project_friction(impulse: np.ndarray, mu: float) -> np.ndarray:
    """Project (normal, t1, t2) onto the inscribed friction pyramid."""
    out = impulse.copy()
    out[0] = max(out[0], 0.0)
    bound = mu * out[0] / SQRT2
    out[1] = min(max(out[1], -bound), bound)
    out[2] = min(max(out[2], -bound), bound)
    return out


def solve_contacts(delassus: np.ndarray, free_velocity: np.ndarray, targets: np.ndarray,
                   mu: float, iterations: int,
                   fixed_normal: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Projected Gauss-Seidel on W lambda + u_free with per-contact blocks.

    Args:
        delassus: (3C, 3C) matrix J A^-1 J^T in contact-frame rows
        free_velocity: (3C,) contact-frame velocity without contact impulses
        targets: (C,) minimum normal velocity per contact
        mu: friction coefficient
        iterations: Gauss-Seidel sweeps
        fixed_normal: (C,) normal impulses of compliant contacts; NaN entries
            (and every entry when omitted) are solved as rigid contacts

    Returns:
        (C, 3) impulses (normal, tangent 1, tangent 2), every one inside the
        friction pyramid with a non-negative normal component.
    """
    n_contacts = targets.shape[0]
    impulses = np.zeros((n_contacts, 3))
    fixed = np.zeros(n_contacts, dtype=bool)
    if fixed_normal is not None:
        fixed = ~np.isnan(fixed_normal)
        impulses[fixed, 0] = np.maximum(fixed_normal[fixed], 0.0)
    if n_contacts == 0:
        return impulses
    goal = np.zeros(3 * n_contacts)
    goal[0::3] = targets
    flat = impulses.reshape(-1)
    blocks = [np.linalg.inv(delassus[3 * i:3 * i + 3, 3 * i:3 * i + 3]
                            + 1e-12 * np.eye(3)) for i in range(n_contacts)]
    for _ in range(iterations):
        for i in range(n_contacts):
            rows = slice(3 * i, 3 * i + 3)
            velocity = delassus[rows] @ flat + free_velocity[rows]
            residual = goal[rows] - velocity
            if fixed[i]:
                diag = np.diag(delassus[rows, rows])[1:]
                update = flat[rows].copy()
                update[1:] += residual[1:] / np.maximum(diag, 1e-12)
            else:
                # tangential target velocity is zero (sticking)
                update = flat[rows] + blocks[i] @ residual
            flat[rows] = project_friction(update, mu)
    return flat.reshape(n_contacts, 3)


def compliant_normal_impulses(distances: np.ndarray, normal_velocity: np.ndarray,
                              stiffness: float, damping: float, dt: float) -> np.ndarray:
    """Spring-damper floor: dt * max(0, k * penetration - c * v_n)."""
    penetration = np.maximum(0.0, -np.asarray(distances, dtype=float))
    force = stiffness * penetration - damping * np.asarray(normal_velocity, dtype=float)
    return dt * np.where(penetration > 0, np.maximum(force, 0.0), 0.0)
