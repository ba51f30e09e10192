"""Shared constructors for the test modules."""

import numpy as np

from scenecast.geometry import Pose
from scenecast.layers import ORIGINAL, PointCloud


def random_pose(rng, max_angle=3.0, scale=5.0):
    axis = rng.normal(size=3)
    angle = rng.uniform(0.0, max_angle)
    return Pose.from_axis_angle(axis, angle, rng.uniform(-scale, scale, size=3))


def random_quat(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def make_cloud(positions, features=None, background=None, provenance=None, object_ids=None,
               labels=None, local=None, pixels=None):
    x = np.asarray(positions, dtype=np.float64)
    n = len(x)
    return PointCloud(
        positions=x,
        features=np.zeros((n, 3), np.float32) if features is None else np.asarray(features, np.float32),
        provenance=np.full(n, ORIGINAL, np.uint8) if provenance is None else np.asarray(provenance, np.uint8),
        source_pixel=np.zeros((n, 2), np.int32) if pixels is None else np.asarray(pixels, np.int32),
        background=np.ones(n, bool) if background is None else np.asarray(background, bool),
        labels=np.zeros(n, np.int32) if labels is None else np.asarray(labels, np.int32),
        object_ids=np.zeros(n, np.int32) if object_ids is None else np.asarray(object_ids, np.int32),
        local=np.zeros((n, 3)) if local is None else np.asarray(local, np.float64),
    )


# acceptance results, filled by test_acceptance and printed in the terminal summary
ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
