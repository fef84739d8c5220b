"""
Stock humanoid for the PhysMotion pipeline.
A 17-link, 16-joint (48 DOF) character of 26 primitives - capsules plus boxes
for the hands and feet - standing upright on y = 0, facing +z, with its left
side on +x. Dimensions scale with height.
"""
from typing import Dict, List, Tuple

import numpy as np

from config import DEFAULT_HEIGHT, DEFAULT_TOTAL_MASS
from enums import PrimitiveKind
from motion.models import BodyModel, JointSpec, LandmarkAttachment, SimState
from services.body_builder import MassDistribution, PrimitiveFit, assemble_body
from utils.data_tables import default_landmarks, joint_table, mass_fractions
from utils.rotations import exp_map_to_matrix, make_transform

REFERENCE_HEIGHT = 1.75
PELVIS_HEIGHT = 0.95        # base origin above the floor at the reference height

# link name, parent, joint centre (world, reference height), joint table entry
LINKS: List[Tuple[str, str, Tuple[float, float, float], str]] = [
    ("pelvis", "", (0.0, 0.95, 0.0), ""),
    ("abdomen", "pelvis", (0.0, 1.05, 0.0), "abdomen"),
    ("chest", "abdomen", (0.0, 1.20, 0.0), "chest"),
    ("neck", "chest", (0.0, 1.45, 0.0), "neck"),
    ("head", "neck", (0.0, 1.53, 0.0), "head"),
    ("right_upper_arm", "chest", (-0.18, 1.42, 0.0), "shoulder"),
    ("right_forearm", "right_upper_arm", (-0.18, 1.13, 0.0), "elbow"),
    ("right_hand", "right_forearm", (-0.18, 0.88, 0.0), "wrist"),
    ("left_upper_arm", "chest", (0.18, 1.42, 0.0), "shoulder"),
    ("left_forearm", "left_upper_arm", (0.18, 1.13, 0.0), "elbow"),
    ("left_hand", "left_forearm", (0.18, 0.88, 0.0), "wrist"),
    ("right_thigh", "pelvis", (-0.09, 0.90, 0.0), "hip"),
    ("right_shin", "right_thigh", (-0.09, 0.47, 0.0), "knee"),
    ("right_foot", "right_shin", (-0.09, 0.07, 0.0), "ankle"),
    ("left_thigh", "pelvis", (0.09, 0.90, 0.0), "hip"),
    ("left_shin", "left_thigh", (0.09, 0.47, 0.0), "knee"),
    ("left_foot", "left_shin", (0.09, 0.07, 0.0), "ankle"),
]

_HORIZONTAL = exp_map_to_matrix([0.0, 0.0, np.pi / 2])   # capsule axis along x
_VERTICAL = np.eye(3)

# link -> [(kind, size, centre in link frame, rotation)]
SHAPES: Dict[str, List[Tuple[PrimitiveKind, Tuple[float, ...], Tuple[float, float, float], np.ndarray]]] = {
    "pelvis": [
        (PrimitiveKind.CAPSULE, (0.09, 0.14), (0.0, 0.0, 0.0), _HORIZONTAL),
        (PrimitiveKind.CAPSULE, (0.075, 0.06), (-0.09, -0.03, 0.0), _VERTICAL),
        (PrimitiveKind.CAPSULE, (0.075, 0.06), (0.09, -0.03, 0.0), _VERTICAL),
    ],
    "abdomen": [(PrimitiveKind.CAPSULE, (0.10, 0.06), (0.0, 0.075, 0.0), _VERTICAL)],
    "chest": [
        (PrimitiveKind.CAPSULE, (0.11, 0.14), (0.0, 0.12, 0.0), _HORIZONTAL),
        (PrimitiveKind.CAPSULE, (0.06, 0.06), (-0.13, 0.20, 0.0), _HORIZONTAL),
        (PrimitiveKind.CAPSULE, (0.06, 0.06), (0.13, 0.20, 0.0), _HORIZONTAL),
    ],
    "neck": [(PrimitiveKind.CAPSULE, (0.05, 0.03), (0.0, 0.04, 0.0), _VERTICAL)],
    "head": [
        (PrimitiveKind.CAPSULE, (0.10, 0.05), (0.0, 0.10, 0.0), _VERTICAL),
        (PrimitiveKind.CAPSULE, (0.05, 0.06), (0.0, 0.04, 0.04), _HORIZONTAL),
    ],
    "upper_arm": [(PrimitiveKind.CAPSULE, (0.045, 0.20), (0.0, -0.145, 0.0), _VERTICAL)],
    "forearm": [(PrimitiveKind.CAPSULE, (0.04, 0.17), (0.0, -0.125, 0.0), _VERTICAL)],
    "hand": [(PrimitiveKind.BOX, (0.04, 0.16, 0.09), (0.0, -0.09, 0.0), _VERTICAL)],
    "thigh": [
        (PrimitiveKind.CAPSULE, (0.07, 0.08), (0.0, -0.11, 0.0), _VERTICAL),
        (PrimitiveKind.CAPSULE, (0.06, 0.10), (0.0, -0.28, 0.0), _VERTICAL),
    ],
    "shin": [
        (PrimitiveKind.CAPSULE, (0.05, 0.08), (0.0, -0.10, 0.0), _VERTICAL),
        (PrimitiveKind.CAPSULE, (0.045, 0.08), (0.0, -0.26, 0.0), _VERTICAL),
    ],
    "foot": [(PrimitiveKind.BOX, (0.09, 0.06, 0.24), (0.0, -0.04, 0.05), _VERTICAL)],
}


def _shape_key(link: str) -> str:
    return link.split("_", 1)[1] if link.startswith(("left_", "right_")) else link


def stance_height(height: float = DEFAULT_HEIGHT) -> float:
    """Base height at which the rest pose stands with its soles on y = 0."""
    return PELVIS_HEIGHT * height / REFERENCE_HEIGHT


def build_stock_character(height: float = DEFAULT_HEIGHT,
                          total_mass: float = DEFAULT_TOTAL_MASS) -> BodyModel:
    """Assemble the stock humanoid scaled to `height` metres and `total_mass` kg."""
    s = height / REFERENCE_HEIGHT
    names = [name for name, _, _, _ in LINKS]
    index = {name: k for k, name in enumerate(names)}
    centers = {name: np.asarray(center) * s for name, _, center, _ in LINKS}
    table = joint_table()

    joints = []
    for name, parent, _, kind in LINKS[1:]:
        entry = table[kind]
        joints.append(JointSpec(
            parent=index[parent], child=index[name],
            frame_in_parent=make_transform(None, centers[name] - centers[parent]),
            frame_in_child=np.eye(4),
            lower=entry["lower"], upper=entry["upper"],
            torque_limit=np.full(3, entry["torque"]),
            stiffness=entry["stiffness"],
            name=name.replace("upper_arm", "shoulder").replace("forearm", "elbow")
                     .replace("hand", "wrist").replace("thigh", "hip")
                     .replace("shin", "knee").replace("foot", "ankle"),
        ))

    fits = {}
    for name in names:
        fits[index[name]] = [
            PrimitiveFit(kind, tuple(v * s for v in size),
                         make_transform(rotation, np.asarray(center) * s), 0.0)
            for kind, size, center, rotation in SHAPES[_shape_key(name)]
        ]

    landmarks = [LandmarkAttachment(index[lm["link"]], np.asarray(lm["offset"]) * s, lm["name"])
                 for lm in default_landmarks()]
    feet = (index["left_foot"], index["right_foot"])
    return assemble_body(fits, joints, MassDistribution(mass_fractions(), total_mass), names,
                         base_link=0, landmarks=landmarks, foot_links=feet)


def standing_state(model: BodyModel, height: float = DEFAULT_HEIGHT) -> SimState:
    """Rest pose with the soles on the floor."""
    return SimState.rest(model, (0.0, stance_height(height), 0.0))
