"""Standard synthetic scenes used by the tests, the acceptance suite and the sample configs."""

import numpy as np

from .geometry import CameraIntrinsics, Pose, Twist
from .simulator import Box, SceneSpec

DEFAULT_INTRINSICS = CameraIntrinsics(150.0, 150.0, 127.5, 63.5, 256, 128)


def _street_boxes(rng):
    boxes = []
    # sidewalks
    boxes.append(Box("sidewalk_l", "sidewalk", [-8.0, -0.075, 70.0], [4.0, 0.15, 180.0], [0.55, 0.53, 0.5]))
    boxes.append(Box("sidewalk_r", "sidewalk", [8.0, -0.075, 70.0], [4.0, 0.15, 180.0], [0.55, 0.53, 0.5]))
    # lane dashes
    for i, z in enumerate(np.arange(-6.0, 150.0, 9.0)):
        boxes.append(Box(f"dash_{i}", "road", [0.0, -0.005, z], [0.18, 0.01, 3.0], [0.92, 0.92, 0.88]))
    # façades on both sides with gaps and varied heights
    for side, x0 in (("l", -13.0), ("r", 13.0)):
        z = -20.0
        j = 0
        while z < 150.0:
            depth = float(rng.uniform(8.0, 16.0))
            height = float(rng.uniform(6.0, 18.0))
            albedo = rng.uniform(0.25, 0.8, size=3)
            boxes.append(Box(f"building_{side}{j}", "building", [x0, -height / 2, z + depth / 2],
                             [6.0, height, depth], albedo))
            z += depth + float(rng.uniform(0.0, 3.0))
            j += 1
    # trees on sidewalks
    for side, x in (("l", -7.2), ("r", 7.2)):
        for j, z in enumerate(np.arange(4.0, 120.0, 14.0) + (5.0 if side == "r" else 0.0)):
            boxes.append(Box(f"trunk_{side}{j}", "vegetation", [x, -1.25, z], [0.35, 2.5, 0.35], [0.35, 0.25, 0.15]))
            boxes.append(Box(f"crown_{side}{j}", "vegetation", [x, -3.6, z], [2.4, 2.2, 2.4],
                             rng.uniform([0.1, 0.35, 0.1], [0.25, 0.6, 0.25])))
    # far backdrop closing the street
    boxes.append(Box("backdrop", "building", [0.0, -15.0, 160.0], [60.0, 30.0, 4.0], [0.6, 0.55, 0.5]))
    return boxes


def street_scene(frames=12, seed=0, speed=1.0, yaw_deg=0.4, cars=(), intrinsics=DEFAULT_INTRINSICS):
    """Straight urban street seen by a camera driving forward at ``speed`` m/frame."""
    rng = np.random.default_rng(seed)
    boxes = _street_boxes(rng) + list(cars)
    twist = Twist([0.0, np.deg2rad(yaw_deg), 0.0], [0.0, 0.0, speed])
    return SceneSpec(intrinsics, frames=frames, seed=seed, boxes=boxes,
                     camera_start=Pose.from_translation([0.0, -1.6, 0.0]), camera_twist=twist)


def static_scene(frames=12, seed=0, **kw):
    return street_scene(frames=frames, seed=seed, **kw)


def dynamic_cars():
    return [
        # same direction, right lane, slower than the camera
        Box("car_ahead", "car", [2.5, -0.8, 14.0], [1.8, 1.6, 4.2], [0.75, 0.12, 0.1],
            velocity=[0.0, 0.0, 0.5]),
        # crossing from left to right further ahead
        Box("car_crossing", "car", [-4.0, -0.8, 30.0], [4.2, 1.6, 1.8], [0.1, 0.2, 0.7],
            velocity=[0.4, 0.0, 0.0]),
    ]


def dynamic_scene(frames=12, seed=0, **kw):
    """The standard dynamic scene: the static street plus two constant-velocity cars."""
    return street_scene(frames=frames, seed=seed, cars=dynamic_cars(), **kw)


def moving_box_scene(frames=6, seed=0, camera_speed=0.0, velocity=(0.5, 0.0, 0.0), yaw_deg=0.0):
    """One box translating in front of a wall and floor; optional forward camera motion."""
    boxes = [
        Box("wall", "building", [0.0, -10.0, 30.0], [60.0, 20.0, 2.0], [0.6, 0.5, 0.4]),
        Box("mover", "car", [-1.0, -0.8, 10.0], [2.0, 1.6, 3.0], [0.8, 0.2, 0.1], velocity=list(velocity)),
    ]
    twist = Twist([0.0, np.deg2rad(yaw_deg), 0.0], [0.0, 0.0, camera_speed])
    return SceneSpec(DEFAULT_INTRINSICS, frames=frames, seed=seed, boxes=boxes,
                     camera_start=Pose.from_translation([0.0, -1.6, 0.0]), camera_twist=twist)
