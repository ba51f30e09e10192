"""Synthetic street-scene simulator with exact ground truth.

The world uses the camera axis convention (x right, y down, z forward) with
the ground plane at y = 0, so "above ground" means negative y. Scenes are a
ground plane plus axis-aligned boxes; dynamic boxes translate at constant
velocity. Primary visibility is ray cast per pixel and shaded flat (albedo
times a per-face factor, blended towards the horizon colour with depth).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import imageio
from .config import ConfigError, floats, fmt, parse_config
from .geometry import (CameraIntrinsics, Pose, Twist, apply_pose, pixel_grid, pose_compose,
                       pose_inverse, se3_exp)
from .layers import LABEL_IDS, Frame

SKY_DEPTH = 1000.0
GROUND_ID = 1
_LIGHT = np.array([0.35, -1.0, -0.45]) / np.linalg.norm([0.35, -1.0, -0.45])


@dataclass
class Box:
    name: str
    label: str
    center: np.ndarray  # at frame 0, world metres
    size: np.ndarray  # full extents (x, y, z)
    albedo: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))  # m / frame

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.size = np.asarray(self.size, dtype=np.float64)
        self.albedo = np.asarray(self.albedo, dtype=np.float64)
        self.velocity = np.asarray(self.velocity, dtype=np.float64)
        if self.label not in LABEL_IDS:
            raise ValueError(f"box {self.name!r}: unknown label {self.label!r}")
        if np.any(self.size <= 0):
            raise ValueError(f"box {self.name!r}: sizes must be positive")
        if self.center[1] + self.size[1] / 2 > 1e-9:
            raise ValueError(f"box {self.name!r} extends below the ground plane")
        if not np.all(np.isfinite(self.velocity)):
            raise ValueError(f"box {self.name!r}: velocity must be finite")

    @property
    def dynamic(self):
        return bool(np.any(self.velocity != 0))

    def center_at(self, frame):
        return self.center + frame * self.velocity


@dataclass
class SceneSpec:
    intrinsics: CameraIntrinsics
    frames: int = 12
    seed: int = 0
    boxes: list = field(default_factory=list)
    ground_albedo: np.ndarray = field(default_factory=lambda: np.array([0.32, 0.32, 0.34]))
    ground_plane: bool = True
    sky_zenith: np.ndarray = field(default_factory=lambda: np.array([0.35, 0.55, 0.85]))
    sky_horizon: np.ndarray = field(default_factory=lambda: np.array([0.75, 0.82, 0.9]))
    fog_distance: float = 250.0
    camera_start: Pose = field(default_factory=lambda: Pose.from_translation([0.0, -1.6, 0.0]))
    camera_twist: Twist = field(default_factory=Twist.zero)  # body-frame motion per frame
    poses: list | None = None  # explicit camera-to-world poses, overrides the generator

    def __post_init__(self):
        if self.frames < 3:
            raise ValueError("a sequence needs at least 3 frames")
        if self.poses is not None and len(self.poses) != self.frames:
            raise ValueError("explicit pose list must have one pose per frame")

    def camera_pose(self, frame) -> Pose:
        """Camera-to-world pose at ``frame``."""
        if self.poses is not None:
            return self.poses[frame]
        step = se3_exp(self.camera_twist)
        pose = self.camera_start
        for _ in range(frame):
            pose = pose_compose(step, pose)
        return pose

    def relative_pose(self, a, b) -> Pose:
        """``T_{a->b}``: camera-frame coordinates at ``a`` to those at ``b``."""
        return pose_compose(self.camera_pose(a), pose_inverse(self.camera_pose(b)))


@dataclass
class GroundTruthFrame:
    rgb: np.ndarray
    depth: np.ndarray
    labels: np.ndarray
    camera_pose: Pose
    object_ids: np.ndarray
    local: np.ndarray

    @property
    def sky(self):
        return self.object_ids == 0

    def as_frame(self) -> Frame:
        return Frame(self.rgb, self.depth, self.labels, self.object_ids, self.local)


def _face_shade(normal):
    return 0.6 + 0.4 * max(0.0, float(normal @ -_LIGHT))


def _raycast_rows(spec: SceneSpec, cam: Pose, u, v, frame):
    k = spec.intrinsics
    dirs_c = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)
    R = cam.R
    dirs = dirs_c @ R.T
    origin = cam.t
    shape = u.shape
    best = np.full(shape, np.inf)
    prim = np.zeros(shape, dtype=np.int32)  # 0 sky, 1 ground, 2+ boxes
    face = np.zeros(shape, dtype=np.int32)  # axis*2 + (1 if max side)

    if spec.ground_plane:
        with np.errstate(divide="ignore", invalid="ignore"):
            s = -origin[1] / dirs[..., 1]
        hit = np.isfinite(s) & (s > 0)
        best = np.where(hit, s, best)
        prim = np.where(hit, GROUND_ID, prim)
        face = np.where(hit, 2, face)

    for bi, box in enumerate(spec.boxes):
        c = box.center_at(frame)
        lo, hi = c - box.size / 2, c + box.size / 2
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t0 = (lo - origin) * inv
            t1 = (hi - origin) * inv
        tmin = np.minimum(t0, t1)
        tmax = np.maximum(t0, t1)
        tmin = np.where(np.isnan(tmin), -np.inf, tmin)
        tmax = np.where(np.isnan(tmax), np.inf, tmax)
        near_axis = np.argmax(tmin, axis=-1)
        t_near = np.max(tmin, axis=-1)
        t_far = np.min(tmax, axis=-1)
        hit = (t_near <= t_far) & (t_near > 0) & (t_near < best)
        if not hit.any():
            continue
        side = np.take_along_axis(t0 > t1, near_axis[..., None], axis=-1)[..., 0]
        best = np.where(hit, t_near, best)
        prim = np.where(hit, bi + 2, prim)
        face = np.where(hit, near_axis * 2 + side.astype(np.int32), face)
    return dirs, best, prim, face


def render_ground_truth(spec: SceneSpec, frame: int, view_offset: Pose | None = None,
                        threads: int = 1) -> GroundTruthFrame:
    """Ray-cast one frame. ``view_offset`` maps trajectory-camera coordinates to a novel view."""
    k = spec.intrinsics
    cam = spec.camera_pose(frame)
    if view_offset is not None:
        cam = pose_compose(pose_inverse(view_offset), cam)
    u, v = pixel_grid(k.width, k.height)
    bands = np.array_split(np.arange(k.height), max(1, min(threads, k.height)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda rows: _raycast_rows(spec, cam, u[rows], v[rows], frame), bands))
    else:
        parts = [_raycast_rows(spec, cam, u, v, frame)]
    dirs, depth, prim, face = (np.concatenate(p) for p in zip(*parts))

    hit = prim > 0
    world = cam.t + dirs * np.where(hit, depth, 0.0)[..., None]
    world = np.where(hit[..., None], world, 0.0)
    h, w = depth.shape
    rgb = np.zeros((h, w, 3))
    labels = np.full((h, w), LABEL_IDS["sky"], dtype=np.int32)
    local = np.zeros((h, w, 3))

    # sky: vertical gradient by ray elevation
    nd = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    elev = np.clip(-nd[..., 1] * 3.0, 0.0, 1.0)[..., None]
    sky = spec.sky_horizon * (1 - elev) + spec.sky_zenith * elev
    rgb[:] = sky

    albedo = np.zeros((h, w, 3))
    shade = np.ones((h, w))
    g = prim == GROUND_ID
    albedo[g] = spec.ground_albedo
    shade[g] = _face_shade(np.array([0.0, -1.0, 0.0]))
    labels[g] = LABEL_IDS["road"]
    local[g] = world[g]
    face_lut = np.array([_face_shade(sgn * e) for e in np.eye(3) for sgn in (-1.0, 1.0)])
    for bi, box in enumerate(spec.boxes):
        m = prim == bi + 2
        if not m.any():
            continue
        albedo[m] = box.albedo
        labels[m] = LABEL_IDS[box.label]
        local[m] = world[m] - box.center_at(frame)
        shade[m] = face_lut[face[m]]
    fog = np.exp(-np.where(hit, depth, 0.0) / spec.fog_distance)[..., None]
    lit = albedo * shade[..., None] * fog + spec.sky_horizon * (1 - fog)
    rgb = np.where(hit[..., None], lit, rgb)

    depth_out = np.where(hit, depth, SKY_DEPTH)
    return GroundTruthFrame(
        rgb=np.clip(rgb, 0, 1).astype(np.float32),
        depth=depth_out.astype(np.float32)[..., None],
        labels=labels,
        camera_pose=cam,
        object_ids=prim.astype(np.int32),
        local=local.astype(np.float32).astype(np.float64),
    )


def perturb_depth(D, sigma_rel, seed=0):
    """Multiplicative Gaussian depth noise ``D * (1 + sigma_rel * n)``, clamped positive."""
    D = imageio.as_grid(D)
    if sigma_rel == 0:
        return D.copy()
    if sigma_rel < 0:
        raise ValueError("sigma_rel must be non-negative")
    rng = np.random.default_rng(seed)
    n = rng.standard_normal(D.shape)
    out = D.astype(np.float64) * (1.0 + sigma_rel * n)
    floor = 1e-3 * D.astype(np.float64)
    return np.maximum(out, np.maximum(floor, 1e-6)).astype(np.float32)


def ground_truth_flow(spec: SceneSpec, positions, object_ids, local, src, dst):
    """Exact 3D motion of points observed at frame ``src`` to frame ``dst``.

    Points with an object identity follow their object; points without one
    (sky, inpainted background) follow the camera's relative motion.
    """
    positions = np.asarray(positions, dtype=np.float64)
    T = spec.relative_pose(src, dst)
    target = apply_pose(T, positions)
    cam_dst_inv = pose_inverse(spec.camera_pose(dst))
    ids = np.asarray(object_ids)
    for oid in np.unique(ids):
        if oid == 0:
            continue
        sel = ids == oid
        if oid == GROUND_ID:
            world = local[sel]
        else:
            box = spec.boxes[oid - 2]
            world = local[sel] + box.center_at(dst)
        target[sel] = apply_pose(cam_dst_inv, world)
    return target - positions


# --- config round trip -------------------------------------------------------

_SCENE_KEYS = {"width", "height", "fx", "fy", "cx", "cy", "frames", "seed", "fog_distance",
               "sky_zenith", "sky_horizon", "ground_albedo", "ground_plane"}
_CAMERA_KEYS = {"position", "orientation", "omega", "velocity"}
_BOX_KEYS = {"label", "center", "size", "albedo", "velocity"}


def _boolean(raw):
    if raw.lower() in ("1", "true", "yes", "on"):
        return True
    if raw.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def scene_from_config(text, seed=None) -> SceneSpec:
    sections = parse_config(text)
    scene = cam = None
    boxes, traj = [], None
    for sec in sections:
        if sec.kind == "scene":
            scene = sec
        elif sec.kind == "camera":
            cam = sec
        elif sec.kind == "box":
            boxes.append(sec)
        elif sec.kind == "trajectory":
            traj = sec
        else:
            raise ConfigError(f"unknown section [{sec.kind}]", sec.line, sec.kind)
    if scene is None:
        raise ConfigError("missing [scene] section")
    scene.check_keys(_SCENE_KEYS)
    width = scene.take("width", int, required=True)
    height = scene.take("height", int, required=True)
    fx = scene.take("fx", float, required=True)
    try:
        k = CameraIntrinsics(fx, scene.take("fy", float, fx),
                             scene.take("cx", float, (width - 1) / 2),
                             scene.take("cy", float, (height - 1) / 2), width, height)
    except ValueError as exc:
        raise ConfigError(f"invalid intrinsics: {exc}", scene.line) from None
    kw = dict(
        frames=scene.take("frames", int, 12),
        seed=scene.take("seed", int, 0) if seed is None else seed,
        fog_distance=scene.take("fog_distance", float, 250.0),
        ground_plane=scene.take("ground_plane", _boolean, True),
    )
    for key in ("sky_zenith", "sky_horizon", "ground_albedo"):
        val = scene.take(key, floats(3))
        if val is not None:
            kw[key] = np.array(val)
    if cam is not None:
        cam.check_keys(_CAMERA_KEYS)
        pos = cam.take("position", floats(3), [0.0, -1.6, 0.0])
        quat = cam.take("orientation", floats(4), [1.0, 0.0, 0.0, 0.0])
        kw["camera_start"] = Pose(np.array(quat), np.array(pos))
        kw["camera_twist"] = Twist(cam.take("omega", floats(3), [0.0] * 3),
                                   cam.take("velocity", floats(3), [0.0] * 3))
    box_list = []
    for sec in boxes:
        sec.check_keys(_BOX_KEYS)
        try:
            box_list.append(Box(
                name=sec.name or f"box{len(box_list)}",
                label=sec.take("label", str, required=True),
                center=sec.take("center", floats(3), required=True),
                size=sec.take("size", floats(3), required=True),
                albedo=sec.take("albedo", floats(3), [0.5, 0.5, 0.5]),
                velocity=sec.take("velocity", floats(3), [0.0] * 3),
            ))
        except ValueError as exc:
            raise ConfigError(str(exc), sec.line) from None
    kw["boxes"] = box_list
    if traj is not None:
        poses = []
        for key, (raw, line) in sorted(traj.entries.items()):
            try:
                poses.append(Pose.from_line(raw))
            except ValueError as exc:
                raise ConfigError(f"bad pose {key!r}: {exc}", line, key) from None
        kw["poses"] = poses
    try:
        return SceneSpec(k, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc), scene.line) from None


def scene_to_config(spec: SceneSpec) -> str:
    k = spec.intrinsics
    out = ["[scene]",
           f"width = {k.width}", f"height = {k.height}",
           f"fx = {k.fx!r}", f"fy = {k.fy!r}", f"cx = {k.cx!r}", f"cy = {k.cy!r}",
           f"frames = {spec.frames}", f"seed = {spec.seed}",
           f"fog_distance = {spec.fog_distance!r}",
           f"ground_plane = {'true' if spec.ground_plane else 'false'}",
           f"ground_albedo = {fmt(spec.ground_albedo)}",
           f"sky_zenith = {fmt(spec.sky_zenith)}", f"sky_horizon = {fmt(spec.sky_horizon)}",
           "", "[camera]",
           f"position = {fmt(spec.camera_start.t)}",
           f"orientation = {fmt(spec.camera_start.q)}",
           f"omega = {fmt(spec.camera_twist.omega)}",
           f"velocity = {fmt(spec.camera_twist.v)}"]
    for box in spec.boxes:
        out += ["", f"[box {box.name}]", f"label = {box.label}", f"center = {fmt(box.center)}",
                f"size = {fmt(box.size)}", f"albedo = {fmt(box.albedo)}",
                f"velocity = {fmt(box.velocity)}"]
    if spec.poses is not None:
        out += ["", "[trajectory]"]
        out += [f"frame_{i:04d} = {p.to_line()}" for i, p in enumerate(spec.poses)]
    return "\n".join(out) + "\n"


def load_scene(path, seed=None) -> SceneSpec:
    return scene_from_config(Path(path).read_text(), seed=seed)


def frame_names(i):
    return f"frame_{i:04d}.ppm", f"depth_{i:04d}.pfm", f"labels_{i:04d}.pgm", f"corr_{i:04d}.bin"


def generate_sequence(spec: SceneSpec, out_dir, threads=1):
    """Render every frame and write the dataset layout; returns the manifest lines."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = spec.intrinsics
    manifest = []
    for i in range(spec.frames):
        gt = render_ground_truth(spec, i, threads=threads)
        names = frame_names(i)
        imageio.write_ppm(out / names[0], gt.rgb)
        imageio.write_pfm(out / names[1], gt.depth)
        imageio.write_pgm(out / names[2], gt.labels, maxval=255)
        imageio.write_corr(out / names[3], gt.object_ids, gt.local)
        manifest.append(" ".join(names) + " " + gt.camera_pose.to_line())
    (out / "manifest.txt").write_text("\n".join(manifest) + "\n")
    (out / "intrinsics.txt").write_text(k.to_line() + "\n")
    (out / "scene.cfg").write_text(scene_to_config(spec))
    return manifest


@dataclass
class Dataset:
    root: Path
    intrinsics: CameraIntrinsics
    entries: list  # (names tuple, camera-to-world Pose)
    scene: SceneSpec | None

    def __len__(self):
        return len(self.entries)

    def frame(self, i) -> Frame:
        names, _ = self.entries[i]
        r = self.root
        rgb = imageio.read_ppm(r / names[0])
        depth = imageio.read_pfm(r / names[1])
        labels = imageio.read_pgm(r / names[2])
        ids = local = None
        if len(names) > 3 and (r / names[3]).exists():
            ids, local = imageio.read_corr(r / names[3], self.intrinsics.width, self.intrinsics.height)
        return Frame(rgb, depth, labels, ids, local)

    def pose(self, i) -> Pose:
        return self.entries[i][1]


def load_dataset(root) -> Dataset:
    root = Path(root)
    manifest = root / "manifest.txt"
    if not manifest.exists():
        raise imageio.DataError(f"{root}: no manifest.txt")
    k = CameraIntrinsics.from_line((root / "intrinsics.txt").read_text().strip())
    entries = []
    for lineno, line in enumerate(manifest.read_text().splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) < 10:
            raise imageio.DataError(f"manifest line {lineno}: expected file names and a pose")
        names, pose = tuple(parts[:-7]), Pose.from_line(" ".join(parts[-7:]))
        entries.append((names, pose))
    scene = load_scene(root / "scene.cfg") if (root / "scene.cfg").exists() else None
    return Dataset(root, k, entries, scene)


def with_seed(spec: SceneSpec, seed) -> SceneSpec:
    return replace(spec, seed=seed)
