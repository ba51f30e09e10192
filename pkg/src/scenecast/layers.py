"""Feature layers and their lifting to 3D point clouds.

A frame becomes two layers sharing one background mask: the original
layer ``{F, D, M}`` and the inpainted layer ``{F_bg, D_bg, M}``, where the
foreground has been replaced with propagated background content pushed
strictly behind the object it hides. Unprojecting the whole original layer
plus the foreground pixels of the inpainted layer yields the point cloud.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import kernels
from .errors import DataError
from .geometry import CameraIntrinsics, pixel_grid, unproject
from .imageio import as_grid

EPS_DEPTH = 0.05

ORIGINAL = 0
INPAINTED = 1

# Cityscapes train ids.
LABEL_IDS = {
    "road": 0, "sidewalk": 1, "building": 2, "wall": 3, "fence": 4, "pole": 5,
    "traffic light": 6, "traffic sign": 7, "vegetation": 8, "terrain": 9, "sky": 10,
    "person": 11, "rider": 12, "car": 13, "truck": 14, "bus": 15, "train": 16,
    "motorcycle": 17, "bicycle": 18,
}
LABEL_NAMES = {v: k for k, v in LABEL_IDS.items()}

STATIC_LABELS = frozenset({"building", "road", "sidewalk", "vegetation", "fence", "wall", "terrain", "sky"})
DYNAMIC_LABELS = frozenset({"person", "rider", "car", "truck", "bus", "train", "motorcycle", "bicycle",
                            "pole", "traffic light", "traffic sign"})


@dataclass(frozen=True)
class CategoryConfig:
    static_labels: frozenset = STATIC_LABELS
    dynamic_labels: frozenset = DYNAMIC_LABELS
    label_ids: dict = field(default_factory=lambda: dict(LABEL_IDS))

    def __post_init__(self):
        overlap = set(self.static_labels) & set(self.dynamic_labels)
        if overlap:
            raise ValueError(f"labels in both static and dynamic sets: {sorted(overlap)}")
        for name in self.label_ids:
            if name not in self.static_labels and name not in self.dynamic_labels:
                raise ValueError(f"label {name!r} is in neither category set")

    @classmethod
    def poles_static(cls):
        """Variant that treats pole as background."""
        return cls(static_labels=STATIC_LABELS | {"pole"}, dynamic_labels=DYNAMIC_LABELS - {"pole"})

    def static_ids(self):
        return sorted(i for n, i in self.label_ids.items() if n in self.static_labels)


@dataclass
class FeatureLayer:
    features: np.ndarray  # (H, W, C)
    depth: np.ndarray  # (H, W, 1), metres
    mask: np.ndarray  # (H, W, 1), 1 = background
    labels: np.ndarray | None = None  # (H, W) integer ids, carried for rollouts

    @property
    def shape(self):
        return self.depth.shape[:2]


@dataclass
class Frame:
    """One RGB-D observation plus whatever ground truth accompanies it."""

    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    depth: np.ndarray  # (H, W, 1)
    labels: np.ndarray  # (H, W) int
    object_ids: np.ndarray | None = None  # (H, W) int, 0 = no identity
    local: np.ndarray | None = None  # (H, W, 3) object-local coordinates


@dataclass
class PointCloud:
    positions: np.ndarray  # (N, 3) float64
    features: np.ndarray  # (N, C) float32
    provenance: np.ndarray  # (N,) uint8, ORIGINAL or INPAINTED
    source_pixel: np.ndarray  # (N, 2) int32, (u, v)
    background: np.ndarray  # (N,) bool, mask value at the source pixel
    labels: np.ndarray  # (N,) int32
    object_ids: np.ndarray  # (N,) int32
    local: np.ndarray  # (N, 3) float64
    skipped: int = 0

    def __len__(self):
        return self.positions.shape[0]

    def with_positions(self, positions):
        return PointCloud(np.asarray(positions, dtype=np.float64), self.features, self.provenance,
                          self.source_pixel, self.background, self.labels, self.object_ids,
                          self.local, self.skipped)

    def subset(self, sel):
        return PointCloud(self.positions[sel], self.features[sel], self.provenance[sel],
                          self.source_pixel[sel], self.background[sel], self.labels[sel],
                          self.object_ids[sel], self.local[sel], self.skipped)


def segment_partition(labels, cfg: CategoryConfig = CategoryConfig()):
    labels = np.asarray(labels)
    if labels.ndim == 3:
        labels = labels[:, :, 0]
    labels = labels.astype(np.int64)
    known = set(cfg.label_ids.values())
    present = np.unique(labels)
    unknown = [int(i) for i in present if int(i) not in known]
    if unknown:
        raise DataError(f"unknown label id {unknown[0]} (not in category config)")
    mask = np.isin(labels, cfg.static_ids())
    return as_grid(mask.astype(np.float32))


def inpaint_rgbd(I, D, M, eps_depth=EPS_DEPTH):
    """Fill foreground (M == 0) by ring-wise propagation of background colour and depth.

    Each ring takes the mean of already-known 8-neighbours; rings are
    barrier-synchronised so the result does not depend on traversal order.
    Filled depth is clamped to at least ``D + eps_depth``.
    """
    I = as_grid(I)
    D = as_grid(D)
    known = as_grid(M)[:, :, 0] > 0.5
    if not known.any():
        raise DataError("cannot inpaint: mask has no background pixels")
    if known.all():
        return I.copy(), D.copy()
    stack = np.concatenate([I, D], axis=2).astype(np.float64)
    filled = kernels.ring_inpaint(stack, known)
    I_bg = filled[:, :, :-1].astype(np.float32)
    D_fill = filled[:, :, -1:]
    fg = ~known
    D_bg = D.astype(np.float64).copy()
    D_bg[fg] = np.maximum(D_fill[fg], D.astype(np.float64)[fg] + eps_depth)
    I_bg[known] = I[known]
    return I_bg, D_bg.astype(np.float32)


def encode_features(I, mode="identity"):
    I = as_grid(I)
    if mode == "identity":
        return I
    if mode == "gradient":
        du = np.gradient(I, axis=1)
        dv = np.gradient(I, axis=0)
        return np.concatenate([I, du, dv], axis=2).astype(np.float32)
    raise ValueError(f"unknown encoder mode {mode!r}")


def _nearest_background_labels(labels, mask):
    """Label map where each foreground pixel takes its nearest background pixel's label."""
    fg = mask[:, :, 0] < 0.5
    if not fg.any():
        return labels.copy()
    _, idx = ndimage.distance_transform_edt(fg, return_indices=True)
    return labels[idx[0], idx[1]]


def build_feature_layers(I, D, labels, cfg: CategoryConfig = CategoryConfig(), k=None,
                         mode="identity", eps_depth=EPS_DEPTH):
    """Return the original and inpainted feature layers for one frame."""
    I = as_grid(I)
    D = as_grid(D)
    labels = np.asarray(labels)
    if labels.ndim == 3:
        labels = labels[:, :, 0]
    if I.shape[:2] != D.shape[:2] or labels.shape != D.shape[:2]:
        raise ValueError("image, depth and label grids must share a size")
    M = segment_partition(labels, cfg)
    I_bg, D_bg = inpaint_rgbd(I, D, M, eps_depth)
    labels_bg = _nearest_background_labels(labels, M)
    orig = FeatureLayer(encode_features(I, mode), D, M, labels)
    inp = FeatureLayer(encode_features(I_bg, mode), D_bg, M, labels_bg)
    return orig, inp


def unproject_layers(orig: FeatureLayer, inp: FeatureLayer, k: CameraIntrinsics,
                     object_ids=None, local=None) -> PointCloud:
    """Union of every original-layer pixel and the foreground pixels of the inpainted layer."""
    h, w = orig.shape
    u, v = pixel_grid(w, h)
    bg = orig.mask[:, :, 0] > 0.5
    if object_ids is None:
        object_ids = np.zeros((h, w), dtype=np.int32)
    if local is None:
        local = np.zeros((h, w, 3))
    labels = orig.labels if orig.labels is not None else np.zeros((h, w), dtype=np.int32)
    labels_bg = inp.labels if inp.labels is not None else labels

    parts = []
    skipped = 0
    for layer, sel, prov in ((orig, np.ones((h, w), bool), ORIGINAL), (inp, ~bg, INPAINTED)):
        d = layer.depth[:, :, 0].astype(np.float64)
        pts, valid = unproject(u[sel], v[sel], d[sel], k)
        skipped += int((~valid).sum())
        rows, cols = np.nonzero(sel)
        rows, cols = rows[valid], cols[valid]
        n = rows.size
        if prov == ORIGINAL:
            ids = object_ids[rows, cols].astype(np.int32)
            loc = local[rows, cols].astype(np.float64)
            lab = labels[rows, cols]
        else:
            ids = np.zeros(n, dtype=np.int32)
            loc = np.zeros((n, 3))
            lab = labels_bg[rows, cols]
        parts.append((pts, layer.features[rows, cols], np.full(n, prov, np.uint8),
                      np.stack([cols, rows], axis=1).astype(np.int32), bg[rows, cols],
                      lab.astype(np.int32), ids, loc))
    cat = [np.concatenate(x) for x in zip(*parts)]
    return PointCloud(*cat, skipped=skipped)
