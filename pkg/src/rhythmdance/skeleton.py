"""Toy 11-joint skeleton shared by the synthetic corpus and the geometric features.

Axes: y is up, z points forward.
"""
import numpy as np

JOINT_NAMES = (
    "root", "chest", "head",
    "l_elbow", "l_hand", "r_elbow", "r_hand",
    "l_knee", "l_foot", "r_knee", "r_foot",
)
JOINT = {name: i for i, name in enumerate(JOINT_NAMES)}
REST_POSE = np.array([
    [0.0, 1.0, 0.0], [0.0, 1.5, 0.0], [0.0, 1.8, 0.0],
    [-0.3, 1.3, 0.0], [-0.35, 1.0, 0.1], [0.3, 1.3, 0.0], [0.35, 1.0, 0.1],
    [-0.1, 0.55, 0.0], [-0.1, 0.05, 0.0], [0.1, 0.55, 0.0], [0.1, 0.05, 0.0],
])
BONES = ((0, 1), (1, 2), (1, 3), (3, 4), (1, 5), (5, 6), (0, 7), (7, 8), (0, 9), (9, 10))
UPPER = (1, 2, 3, 4, 5, 6)
LOWER = (0, 7, 8, 9, 10)
