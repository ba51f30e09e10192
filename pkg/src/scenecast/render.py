"""Displace, splat and fuse point clouds into a forecast frame, plus the recursive rollout."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from . import kernels
from .errors import DataError
from .geometry import CameraIntrinsics, Pose, apply_pose
from .layers import ORIGINAL, CategoryConfig, Frame, PointCloud, build_feature_layers, unproject_layers
from .motion import EgoForecast, MotionConfig, forecast_motion, kabsch
from .simulator import perturb_depth

ZBUFFER = "zbuffer"
SOFT = "soft"
REF_DEPTH = 10.0  # depth at which the two radius rules agree


@dataclass(frozen=True)
class RenderConfig:
    intrinsics: CameraIntrinsics
    target_view: Pose = field(default_factory=Pose.identity)
    base_radius: float = 0.03
    compositing: str = SOFT
    k_top: int = 4
    min_radius_px: float = 0.9
    radius_mode: str = "inverse"  # or "proportional" (screen radius grows with depth)
    layered: bool = True  # inpainted points only fill pixels no original point covers
    depth_gate: float | None = 0.03  # soft mode: blend only slots within this relative depth of the nearest
    threads: int = 1

    def __post_init__(self):
        if not self.base_radius > 0:
            raise ValueError("base_radius must be positive")
        if self.k_top < 1:
            raise ValueError("k_top must be at least 1")
        if self.compositing not in (ZBUFFER, SOFT):
            raise ValueError(f"unknown compositing mode {self.compositing!r}")
        if self.radius_mode not in ("inverse", "proportional"):
            raise ValueError(f"unknown radius mode {self.radius_mode!r}")
        if self.min_radius_px < 0:
            raise ValueError("min_radius_px must be non-negative")


@dataclass
class SplatBuffer:
    features: np.ndarray  # (H, W, C) normalised feature per pixel
    weight: np.ndarray  # (H, W) total splat weight before normalisation
    depth: np.ndarray  # (H, W) nearest depth, inf where uncovered
    coverage: np.ndarray  # (H, W) bool
    index: np.ndarray  # (H, W) nearest point index, -1 where uncovered
    culled: int = 0

    @property
    def shape(self):
        return self.depth.shape


def displace_cloud(P: PointCloud, u) -> PointCloud:
    u = np.asarray(u, dtype=np.float64)
    if u.shape != P.positions.shape:
        raise ValueError(f"flow has shape {u.shape}, cloud has {P.positions.shape}")
    return P.with_positions(P.positions + u)


def screen_radius(z, rc: RenderConfig):
    """Disc radius in pixels for points at camera depth ``z``."""
    z = np.asarray(z, dtype=np.float64)
    if rc.radius_mode == "inverse":
        r = rc.intrinsics.fx * rc.base_radius / z
    else:
        r = rc.intrinsics.fx * rc.base_radius * z / REF_DEPTH ** 2
    return np.maximum(r, rc.min_radius_px)


def splat(P: PointCloud, rc: RenderConfig) -> SplatBuffer:
    """Splat a cloud into the target view.

    With ``rc.layered`` the original and inpainted points are composited as
    two layers: inpainted points show only where no original point lands.
    """
    if not rc.layered:
        return _splat(P, rc)
    orig = np.nonzero(P.provenance == ORIGINAL)[0]
    inp = np.nonzero(P.provenance != ORIGINAL)[0]
    if inp.size == 0:
        return _splat(P, rc)
    front = _splat(P.subset(orig), rc)
    back = _splat(P.subset(inp), rc)
    fill = ~front.coverage & back.coverage
    fill3 = fill[:, :, None]
    index = np.where(front.coverage, orig[np.maximum(front.index, 0)], -1)
    index = np.where(fill, inp[np.maximum(back.index, 0)], index)
    return SplatBuffer(np.where(fill3, back.features, front.features),
                       np.where(fill, back.weight, front.weight),
                       np.where(fill, back.depth, front.depth),
                       front.coverage | fill, index, culled=front.culled + back.culled)


def _splat(P: PointCloud, rc: RenderConfig) -> SplatBuffer:
    k = rc.intrinsics
    x = apply_pose(rc.target_view, P.positions)
    z = x[:, 2]
    front = z > 1e-6
    zf = np.where(front, z, 1.0)
    u = k.fx * x[:, 0] / zf + k.cx
    v = k.fy * x[:, 1] / zf + k.cy
    r = screen_radius(zf, rc)
    onscreen = front & (u + r >= -0.5) & (u - r <= k.width - 0.5) & (v + r >= -0.5) & (v - r <= k.height - 0.5)
    keep = np.nonzero(onscreen)[0]
    ktop = 1 if rc.compositing == ZBUFFER else rc.k_top
    zb, ix, d2 = kernels.splat_topk(u[keep], v[keep], z[keep], r[keep], k.width, k.height, ktop,
                                    threads=rc.threads)
    slot = ix >= 0
    idx = np.where(slot, keep[np.where(slot, ix, 0)], -1)
    coverage = slot[:, :, 0]
    feats = P.features
    C = feats.shape[1]
    if rc.compositing == ZBUFFER:
        w = coverage.astype(np.float64)
        out = np.zeros((k.height, k.width, C), dtype=np.float64)
        out[coverage] = feats[idx[:, :, 0][coverage]]
    else:
        rj = np.where(slot, r[np.where(slot, idx, 0)], 1.0)
        wk = np.where(slot, np.exp(-d2 / (2.0 * (rj / 2.0) ** 2)), 0.0)
        if rc.depth_gate is not None:
            wk = np.where(zb <= zb[:, :, :1] * (1.0 + rc.depth_gate), wk, 0.0)
        w = wk.sum(axis=2)
        norm = np.where(w > 0, w, 1.0)
        out = np.zeros((k.height, k.width, C), dtype=np.float64)
        for s in range(ktop):
            fs = feats[np.where(slot[:, :, s], idx[:, :, s], 0)]
            out += (wk[:, :, s] / norm)[:, :, None] * fs
        coverage = coverage & (w > 0)
    depth = np.where(coverage, zb[:, :, 0], np.inf)
    return SplatBuffer(out, w, depth, coverage, np.where(coverage, idx[:, :, 0], -1),
                       culled=int(len(P) - keep.size))


def pull_push(values, valid):
    """Fill invalid pixels from a 2x average pyramid of the valid ones."""
    values = np.asarray(values, dtype=np.float64)
    squeeze = values.ndim == 2
    if squeeze:
        values = values[:, :, None]
    out = _pull_push(values, valid.astype(bool))
    return out[:, :, 0] if squeeze else out


def _pull_push(val, valid):
    h, w = valid.shape
    if valid.all():
        return val
    if not valid.any():
        raise DataError("nothing to fill holes from")
    if h == 1 and w == 1:
        return val
    ph, pw = h + (h % 2), w + (w % 2)
    vpad = np.zeros((ph, pw, val.shape[2]))
    wpad = np.zeros((ph, pw))
    vpad[:h, :w] = np.where(valid[:, :, None], val, 0.0)
    wpad[:h, :w] = valid
    s_w = wpad.reshape(ph // 2, 2, pw // 2, 2).sum(axis=(1, 3))
    s_v = vpad.reshape(ph // 2, 2, pw // 2, 2, -1).sum(axis=(1, 3))
    coarse_valid = s_w > 0
    coarse = np.where(coarse_valid[:, :, None], s_v / np.maximum(s_w, 1)[:, :, None], 0.0)
    filled = _pull_push(coarse, coarse_valid)
    up = np.repeat(np.repeat(filled, 2, axis=0), 2, axis=1)[:h, :w]
    return np.where(valid[:, :, None], val, up)


@dataclass
class FusedFrame:
    rgb: np.ndarray  # (H, W, C) clamped to [0, 1]
    depth: np.ndarray  # (H, W, 1)
    covered: np.ndarray  # (H, W) bool, pixel hit by either buffer
    source: np.ndarray  # (H, W) int8: 1 curr, 0 prev, -1 hole
    index: np.ndarray  # (H, W) winning point index in its source cloud


def refine_fuse(buf_prev: SplatBuffer, buf_curr: SplatBuffer, alpha=0.7) -> FusedFrame:
    """Recency-weighted blend of the two buffers, pull-push into the holes."""
    if buf_prev.shape != buf_curr.shape:
        raise ValueError("splat buffers differ in size")
    if not (buf_prev.coverage.any() or buf_curr.coverage.any()):
        raise DataError("both splat buffers are empty")
    wc = np.where(buf_curr.coverage, alpha * buf_curr.weight, 0.0)
    wp = np.where(buf_prev.coverage, (1.0 - alpha) * buf_prev.weight, 0.0)
    tot = wc + wp
    covered = tot > 0
    safe = np.where(covered, tot, 1.0)[:, :, None]
    fc = np.where(buf_curr.coverage[:, :, None], buf_curr.features, 0.0)
    fp = np.where(buf_prev.coverage[:, :, None], buf_prev.features, 0.0)
    blend = (wc[:, :, None] * fc + wp[:, :, None] * fp) / safe
    # one-sided pixels take that buffer's value exactly
    blend = np.where((wp == 0)[:, :, None], fc, np.where((wc == 0)[:, :, None], fp, blend))
    rgb = np.clip(pull_push(blend, covered), 0.0, 1.0)

    from_curr = buf_curr.coverage
    source = np.where(from_curr, 1, np.where(buf_prev.coverage, 0, -1)).astype(np.int8)
    depth = np.where(from_curr, buf_curr.depth, buf_prev.depth)
    depth = pull_push(np.where(covered, depth, 0.0), covered)
    index = np.where(from_curr, buf_curr.index, buf_prev.index)
    return FusedFrame(rgb, depth[:, :, None].astype(np.float32), covered, source, index)


def _local_rotations(P: PointCloud):
    """Per-object rotation taking object-local offsets to camera offsets, fitted on the cloud."""
    rots = {}
    sel = (P.provenance == ORIGINAL) & (P.object_ids > 0)
    ids = P.object_ids[sel]
    idx = np.nonzero(sel)[0]
    order = np.argsort(ids, kind="stable")
    ids, idx = ids[order], idx[order]
    starts = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]]) if ids.size else []
    ends = list(starts[1:]) + [ids.size] if ids.size else []
    for a, b in zip(starts, ends):
        members = idx[a:b]
        if members.size < 3:
            continue
        R, _, S = kabsch(P.local[members], P.positions[members])
        if S[1] > 1e-9 * max(S[0], 1e-300):
            rots[int(ids[a])] = R
    return rots


def fused_attributes(fused: FusedFrame, P_prev: PointCloud, P_curr: PointCloud, k: CameraIntrinsics | None = None):
    """Labels, object ids and local coordinates of the winning points.

    ``P_prev`` and ``P_curr`` are the displaced clouds that were splatted.
    With intrinsics given, each pixel's local coordinate is moved from the
    winning point to the pixel-centre point at the rendered depth, so the
    synthesized frame stays geometrically self-consistent. Holes take the
    nearest covered pixel's label and no identity.
    """
    h, w = fused.source.shape
    labels = np.zeros((h, w), dtype=np.int32)
    ids = np.zeros((h, w), dtype=np.int32)
    local = np.zeros((h, w, 3))
    for src, P in ((1, P_curr), (0, P_prev)):
        sel = fused.source == src
        if not sel.any():
            continue
        j = fused.index[sel]
        labels[sel] = P.labels[j]
        ids[sel] = P.object_ids[j]
        loc = P.local[j]
        if k is not None:
            rows, cols = np.nonzero(sel)
            z = P.positions[j, 2]
            centre = np.stack([(cols - k.cx) / k.fx * z, (rows - k.cy) / k.fy * z, z], axis=1)
            off = centre - P.positions[j]
            oid = P.object_ids[j]
            for o, R in _local_rotations(P).items():
                m = oid == o
                if m.any():
                    loc[m] = loc[m] + off[m] @ R
        local[sel] = loc
    hole = fused.source < 0
    if hole.any():
        _, near = ndimage.distance_transform_edt(hole, return_indices=True)
        labels = labels[near[0], near[1]]
    return labels, ids, local


# --- rollout -----------------------------------------------------------------------

@dataclass
class ForecastConfig:
    intrinsics: CameraIntrinsics
    motion: MotionConfig = field(default_factory=MotionConfig)
    render: RenderConfig | None = None
    categories: CategoryConfig = field(default_factory=CategoryConfig)
    feature_mode: str = "identity"
    alpha: float = 0.7
    fixed_depth: float | None = None
    depth_noise: float = 0.0
    noise_seed: int = 0

    def render_config(self):
        return self.render or RenderConfig(self.intrinsics, threads=self.motion.threads)


@dataclass
class ForecastStep:
    step: int
    rgb: np.ndarray  # (H, W, 3) frame rendered from the requested view
    depth: np.ndarray  # (H, W, 1) depth from the requested view
    frame: Frame  # synthesized frame in the forecast camera, fed back into the rollout
    ego: EgoForecast
    T_hist: Pose
    clouds: tuple  # (P_prev, P_curr)
    flows: tuple  # (U0, UL)
    buffers: tuple  # (buf_prev, buf_curr) for the requested view
    covered: np.ndarray


def build_cloud(frame: Frame, cfg: ForecastConfig):
    orig, inp = build_feature_layers(frame.rgb, frame.depth, frame.labels, cfg.categories,
                                     cfg.intrinsics, cfg.feature_mode)
    return unproject_layers(orig, inp, cfg.intrinsics, frame.object_ids, frame.local)


def _prepare_input(frame: Frame, cfg: ForecastConfig, real, salt):
    depth = frame.depth
    if cfg.fixed_depth is not None:
        depth = np.full_like(depth, cfg.fixed_depth, dtype=np.float32)
    elif real and cfg.depth_noise > 0:
        depth = perturb_depth(depth, cfg.depth_noise, cfg.noise_seed + salt)
    return replace(frame, depth=depth)


def _is_identity(p: Pose):
    return bool(np.all(p.t == 0) and p.q[0] == 1 and np.all(p.q[1:] == 0))


def forecast_step(prev: Frame, curr: Frame, cfg: ForecastConfig, T_hist=None, clouds=None):
    rc = cfg.render_config()
    P_prev, P_curr = clouds or (build_cloud(prev, cfg), build_cloud(curr, cfg))
    mres = forecast_motion(P_prev, P_curr, cfg.intrinsics, cfg.motion, T_hist=T_hist)
    D_prev = displace_cloud(P_prev, mres.UL[0])
    D_curr = displace_cloud(P_curr, mres.UL[1])

    base = replace(rc, target_view=Pose.identity())
    bp, bc = splat(D_prev, base), splat(D_curr, base)
    fused = refine_fuse(bp, bc, cfg.alpha)
    labels, ids, local = fused_attributes(fused, D_prev, D_curr, cfg.intrinsics)
    rgb = fused.rgb[:, :, :3].astype(np.float32)
    synth = Frame(rgb, fused.depth, labels, ids, local)
    if _is_identity(rc.target_view):
        out_rgb, out_depth, bufs, covered = rgb, fused.depth, (bp, bc), fused.covered
    else:
        vp, vc = splat(D_prev, rc), splat(D_curr, rc)
        fv = refine_fuse(vp, vc, cfg.alpha)
        out_rgb, out_depth, bufs, covered = fv.rgb[:, :, :3].astype(np.float32), fv.depth, (vp, vc), fv.covered
    return ForecastStep(0, out_rgb, out_depth, synth, mres.ego, mres.T_hist, (P_prev, P_curr),
                        (mres.U0, mres.UL), bufs, covered)


def forecast_frame(frame_prev: Frame, frame_curr: Frame, cfg: ForecastConfig, horizon=1):
    """Forecast ``horizon`` future frames, feeding each synthesized frame back in."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    a = _prepare_input(frame_prev, cfg, True, 0)
    b = _prepare_input(frame_curr, cfg, True, 1)
    steps = []
    T_hist = None
    for n in range(1, horizon + 1):
        st = forecast_step(a, b, cfg, T_hist=T_hist)
        st.step = n
        steps.append(st)
        # the synthesized frame was rendered at the extrapolated pose, so later
        # steps reuse it instead of registering against rendered geometry
        T_hist = st.ego.T_curr_to_future if cfg.motion.use_emf else None
        nxt = st.frame
        if cfg.fixed_depth is not None:
            nxt = replace(nxt, depth=np.full_like(nxt.depth, cfg.fixed_depth))
        a, b = b, nxt
    return steps


def render_view(frame: Frame, cfg: ForecastConfig):
    """Re-render one frame from ``cfg``'s target view without any motion; returns (rgb, depth)."""
    P = build_cloud(_prepare_input(frame, cfg, True, 1), cfg)
    rc = cfg.render_config()
    buf = splat(P, rc)
    empty = SplatBuffer(np.zeros_like(buf.features), np.zeros_like(buf.weight), np.full(buf.shape, np.inf),
                        np.zeros(buf.shape, dtype=bool), np.full(buf.shape, -1))
    fused = refine_fuse(empty, buf, cfg.alpha)
    return fused.rgb[:, :, :3].astype(np.float32), fused.depth
