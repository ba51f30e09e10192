"""Two-stage 3D motion forecasting.

Stage one registers the static background of the two past clouds (weighted
Kabsch) and extrapolates the camera motion at constant SE(3) velocity; the
resulting pose-induced flow seeds every point. Stage two estimates the
residual motion of foreground points coarse-to-fine over a voxel schedule
and adds it on top of the seed, leaving background points on pure ego
motion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import DataError, DegenerateGeometryError
from .geometry import (CameraIntrinsics, Pose, apply_pose, motion_flow_from_pose, pose_compose,
                       se3_exp, se3_log)
from .layers import INPAINTED, ORIGINAL, PointCloud

DEFAULT_SCALES = (4, 4, 4, 2, 2, 2, 1, 1, 1)


@dataclass(frozen=True)
class MultiScaleSchedule:
    scales: tuple = DEFAULT_SCALES

    def __post_init__(self):
        scales = tuple(int(s) for s in self.scales)
        if not scales:
            raise ValueError("multi-scale schedule is empty")
        if any(s < 1 for s in scales):
            raise ValueError("scale factors must be positive integers")
        if any(b > a for a, b in zip(scales, scales[1:])):
            raise ValueError("scale factors must be non-increasing")
        if scales[-1] != 1:
            raise ValueError("the last scale factor must be 1")
        object.__setattr__(self, "scales", scales)

    @property
    def L(self):
        return len(self.scales)

    @classmethod
    def parse(cls, text):
        return cls(tuple(int(s) for s in text.replace(",", " ").split()))


@dataclass
class Correspondences:
    """Index pairs ``(idx_a[n], idx_b[n])`` with weights.

    ``pos_b`` is where A's point sits in B's frame; it equals
    ``B.positions[idx_b]`` for nearest-neighbour matches and is refined to
    the exact surface point for ground-truth matches.
    """

    idx_a: np.ndarray
    idx_b: np.ndarray
    weights: np.ndarray
    pos_b: np.ndarray

    def __len__(self):
        return self.idx_a.size

    def select(self, keep):
        return Correspondences(self.idx_a[keep], self.idx_b[keep], self.weights[keep], self.pos_b[keep])


@dataclass
class EgoForecast:
    T_prev_to_future: Pose
    T_curr_to_future: Pose

    def to_lines(self):
        return self.T_prev_to_future.to_line() + "\n" + self.T_curr_to_future.to_line() + "\n"

    @classmethod
    def from_lines(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if len(lines) != 2:
            raise DataError("ego forecast needs exactly two pose lines")
        return cls(Pose.from_line(lines[0]), Pose.from_line(lines[1]))


@dataclass
class MotionConfig:
    corr_mode: str = "gt"  # "gt" (simulator identities) or "nn"
    schedule: MultiScaleSchedule = field(default_factory=MultiScaleSchedule)
    lambda_f: float = 0.1
    base_voxel: float = 0.25
    rho_fine: float = 1.0
    rho_coarse: float = 0.5
    use_emf: bool = True
    use_omf: bool = True
    icp_iters: int = 40
    max_register_depth: float = 500.0
    threads: int = 1


# --- matching ------------------------------------------------------------------

def _nearest_lowest_index(tree, query, k=4, workers=1):
    """Nearest neighbour with exact ties resolved towards the lowest index."""
    k = min(k, tree.n)
    d, i = tree.query(query, k=k, workers=workers)
    if k == 1:
        return d, i
    best = d[:, :1]
    tie = d == best
    cand = np.where(tie, i, np.iinfo(np.int64).max)
    j = np.min(cand, axis=1)
    return d[:, 0], j


def nn_match(xa, fa, xb, fb, lambda_f=0.1, reciprocal=True, workers=1):
    """Nearest neighbours under ``|dx|^2 + lambda_f |df|^2``; returns (ia, ib)."""
    s = np.sqrt(lambda_f)
    ea = np.hstack([xa, s * fa]) if lambda_f > 0 else xa
    eb = np.hstack([xb, s * fb]) if lambda_f > 0 else xb
    tree_b = cKDTree(eb)
    _, ab = _nearest_lowest_index(tree_b, ea, workers=workers)
    ia = np.arange(xa.shape[0])
    if not reciprocal:
        return ia, ab
    tree_a = cKDTree(ea)
    _, ba = _nearest_lowest_index(tree_a, eb, workers=workers)
    keep = ba[ab] == ia
    return ia[keep], ab[keep]


def kabsch(x, y, w=None):
    """Weighted least-squares rigid transform with ``R x + t ~ y``; returns (R, t, singular values)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.ones(len(x)) if w is None else np.asarray(w, dtype=np.float64)
    ws = w.sum()
    cx = (w[:, None] * x).sum(0) / ws
    cy = (w[:, None] * y).sum(0) / ws
    H = ((x - cx) * w[:, None]).T @ (y - cy)
    U, S, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    if d == 0:
        d = 1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return R, cy - R @ cx, S


def _object_frames(B: PointCloud):
    """Per-object rigid map from object-local to B's camera coordinates."""
    frames = {}
    sel_all = (B.provenance == ORIGINAL) & (B.object_ids > 0)
    ids = B.object_ids[sel_all]
    idx = np.nonzero(sel_all)[0]
    for oid in np.unique(ids):
        members = idx[ids == oid]
        if members.size < 3:
            continue
        R, t, S = kabsch(B.local[members], B.positions[members])
        if S[1] <= 1e-9 * max(S[0], 1e-300):
            continue
        frames[int(oid)] = (R, t, members, cKDTree(B.local[members]))
    return frames


def _pixel_index(cloud: PointCloud, width, height):
    grid = np.full((height, width), -1, dtype=np.int64)
    orig = np.nonzero(cloud.provenance == ORIGINAL)[0]
    px = cloud.source_pixel[orig]
    grid[px[:, 1], px[:, 0]] = orig
    return grid


def match_ground_truth(A: PointCloud, B: PointCloud, k: CameraIntrinsics, sel_a=None):
    """Pair each point of A with the same material point seen in B.

    Identity comes from the (object id, object-local coordinate) map. The
    B-frame position is refined through the object's rigid local-to-camera
    map, then accepted only if it is visible in B: it must project onto a
    pixel of the same object at a consistent depth.
    """
    cand = (A.provenance == ORIGINAL) & (A.object_ids > 0)
    if sel_a is not None:
        cand &= sel_a
    frames = _object_frames(B)
    grid = _pixel_index(B, k.width, k.height)
    out_a, out_b, out_pos = [], [], []
    for oid, (R, t, members, tree) in frames.items():
        ia = np.nonzero(cand & (A.object_ids == oid))[0]
        if ia.size == 0:
            continue
        La = A.local[ia]
        _, nj = _nearest_lowest_index(tree, La)
        j0 = members[nj]
        pos = B.positions[j0] + (La - B.local[j0]) @ R.T
        z = pos[:, 2]
        ok = z > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            pu = np.rint(k.fx * pos[:, 0] / z + k.cx)
            pv = np.rint(k.fy * pos[:, 1] / z + k.cy)
        ok &= (pu >= 0) & (pu < k.width) & (pv >= 0) & (pv < k.height)
        pu = np.where(ok, pu, 0).astype(np.int64)
        pv = np.where(ok, pv, 0).astype(np.int64)
        jb = grid[pv, pu]
        ok &= jb >= 0
        jb_safe = np.where(jb >= 0, jb, 0)
        ok &= B.object_ids[jb_safe] == oid
        zb = B.positions[jb_safe, 2]
        ok &= np.abs(zb - z) <= 0.05 + 0.02 * np.abs(z)
        out_a.append(ia[ok])
        out_b.append(jb[ok])
        out_pos.append(pos[ok])
    if not out_a:
        empty = np.zeros(0, dtype=np.int64)
        return Correspondences(empty, empty, np.zeros(0), np.zeros((0, 3)))
    ia = np.concatenate(out_a)
    order = np.argsort(ia, kind="stable")
    ia = ia[order]
    ib = np.concatenate(out_b)[order]
    pos = np.concatenate(out_pos)[order]
    return Correspondences(ia, ib, np.ones(ia.size), pos)


def match_points(A: PointCloud, B: PointCloud, mode="nn", *, k: CameraIntrinsics | None = None,
                 lambda_f=0.1, reciprocal=True, workers=1) -> Correspondences:
    if len(A) == 0 or len(B) == 0:
        raise DataError("cannot match an empty point cloud")
    if mode in ("gt", "ground-truth"):
        if k is None:
            raise ValueError("ground-truth matching needs camera intrinsics")
        return match_ground_truth(A, B, k)
    if mode != "nn":
        raise ValueError(f"unknown correspondence mode {mode!r}")
    ia, ib = nn_match(A.positions, A.features, B.positions, B.features, lambda_f,
                      reciprocal=reciprocal, workers=workers)
    return Correspondences(ia, ib, np.ones(ia.size), B.positions[ib])


# --- ego motion -------------------------------------------------------------------

def _usable_background(cloud: PointCloud, max_depth):
    return ((cloud.provenance == ORIGINAL) & cloud.background
            & (cloud.positions[:, 2] < max_depth))


def estimate_relative_pose(A: PointCloud, B: PointCloud, corr: Correspondences, bg_only=True,
                           max_depth=np.inf) -> Pose:
    """Pose ``T`` minimising ``sum w |T(x_a) - y_b|^2`` over the correspondences."""
    keep = np.ones(len(corr), dtype=bool)
    if bg_only:
        keep &= _usable_background(A, max_depth)[corr.idx_a]
        keep &= _usable_background(B, max_depth)[corr.idx_b]
    x = A.positions[corr.idx_a[keep]]
    y = corr.pos_b[keep]
    w = corr.weights[keep]
    if x.shape[0] < 3:
        raise DegenerateGeometryError(f"only {x.shape[0]} usable correspondences for registration")
    R, t, S = kabsch(x, y, w)
    if S[1] <= 1e-9 * max(S[0], 1e-300):
        raise DegenerateGeometryError("correspondences are collinear; rotation is undetermined")
    return Pose.from_matrix(R, t)


def icp(A: PointCloud, B: PointCloud, init: Pose | None = None, lambda_f=0.1, iters=40,
        max_depth=np.inf, workers=1) -> Pose:
    """Point-to-point ICP on background points with reciprocal feature-augmented matching."""
    sa = np.nonzero(_usable_background(A, max_depth))[0]
    sb = np.nonzero(_usable_background(B, max_depth))[0]
    if sa.size < 3 or sb.size < 3:
        raise DegenerateGeometryError("too few background points for registration")
    xa, fa = A.positions[sa], A.features[sa]
    xb, fb = B.positions[sb], B.features[sb]
    s = np.sqrt(lambda_f)
    tree_b = cKDTree(np.hstack([xb, s * fb]))
    T = init or Pose.identity()
    for _ in range(iters):
        ya = apply_pose(T, xa)
        ea = np.hstack([ya, s * fa])
        _, ab = _nearest_lowest_index(tree_b, ea, workers=workers)
        _, ba = _nearest_lowest_index(cKDTree(ea), tree_b.data, workers=workers)
        keep = ba[ab] == np.arange(sa.size)
        if keep.sum() < 3:
            raise DegenerateGeometryError("ICP lost its correspondences")
        R, t, S = kabsch(xa[keep], xb[ab[keep]])
        if S[1] <= 1e-9 * max(S[0], 1e-300):
            raise DegenerateGeometryError("ICP correspondences are collinear")
        T_new = Pose.from_matrix(R, t)
        step = np.linalg.norm(T_new.t - T.t) + np.linalg.norm(T_new.q - T.q)
        T = T_new
        if step < 1e-9:
            break
    return T


def forecast_ego(T_hist: Pose, steps=1.0) -> EgoForecast:
    """Constant-velocity extrapolation of the last relative camera motion."""
    T_curr = se3_exp(se3_log(T_hist) * steps)
    return EgoForecast(T_prev_to_future=pose_compose(T_hist, T_curr), T_curr_to_future=T_curr)


def ego_flow_field(ef: EgoForecast, P_prev: PointCloud, P_curr: PointCloud):
    """Seed flows U0: every point, inpainted ones included, follows the camera motion."""
    return (motion_flow_from_pose(ef.T_prev_to_future, P_prev.positions),
            motion_flow_from_pose(ef.T_curr_to_future, P_curr.positions))


# --- residual object motion ---------------------------------------------------------

def _voxel_cells(x, edge):
    keys = np.floor(x / edge).astype(np.int64)
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    return inv.reshape(-1)


def _cell_update(x_elig, members, observed, r, edge, rho, weights=None):
    """One block: average observed residuals per voxel and blend them into ``r``.

    ``members`` indexes the eligible points that carry an observation.
    Points in cells without observations are assigned the nearest observed
    cell (by centroid) before blending.
    """
    if members.size == 0:
        return r
    cell = _voxel_cells(x_elig, edge)
    ncell = cell.max() + 1
    w = np.ones(members.size) if weights is None else weights
    acc = np.zeros((ncell, 3))
    for c in range(3):
        acc[:, c] = np.bincount(cell[members], weights=w * observed[:, c], minlength=ncell)
    wsum = np.bincount(cell[members], weights=w, minlength=ncell)
    has = wsum > 0
    cell_r = np.zeros((ncell, 3))
    cell_r[has] = acc[has] / wsum[has, None]
    target = cell_r[cell]
    got = has[cell]
    if not got.all():
        cent = np.zeros((ncell, 3))
        cnt = np.bincount(cell, minlength=ncell)
        for c in range(3):
            cent[:, c] = np.bincount(cell, weights=x_elig[:, c], minlength=ncell) / np.maximum(cnt, 1)
        data_cells = np.nonzero(has)[0]
        _, near = cKDTree(cent[data_cells]).query(x_elig[~got])
        target[~got] = cell_r[data_cells[near]]
        got = np.ones_like(got)
    out = r.copy()
    out[got] = r[got] + rho * (target[got] - r[got])
    return out


def residual_object_flow(P_prev: PointCloud, P_curr: PointCloud, U0, T_hist: Pose, ef: EgoForecast,
                         sched: MultiScaleSchedule, corr_mode="gt", k: CameraIntrinsics | None = None,
                         cfg: MotionConfig | None = None, include_background=False):
    """Refine U0 with residual (object) motion over the multi-scale schedule.

    ``include_background`` lets every point receive residual motion; it is
    used when the ego stage is disabled.
    """
    cfg = cfg or MotionConfig()
    if sched is None or not sched.scales:
        raise ValueError("multi-scale schedule is empty")
    u0_prev, u0_curr = U0
    if include_background:
        elig_c = np.ones(len(P_curr), dtype=bool)
        elig_p = np.ones(len(P_prev), dtype=bool)
        obs_c = P_curr.provenance == ORIGINAL
    else:
        elig_c = (P_curr.provenance == ORIGINAL) & ~P_curr.background
        elig_p = (P_prev.provenance == ORIGINAL) & ~P_prev.background
        obs_c = elig_c
    ic = np.nonzero(elig_c)[0]
    ip = np.nonzero(elig_p)[0]
    if ic.size == 0 or ip.size == 0:
        return u0_prev.copy(), u0_curr.copy()

    xc = P_curr.positions[ic]
    yp = apply_pose(T_hist, P_prev.positions[ip])
    r_c = np.zeros((ic.size, 3))
    r_p = np.zeros((ip.size, 3))
    pos_in_c = np.full(len(P_curr), -1)
    pos_in_c[ic] = np.arange(ic.size)
    pos_in_p = np.full(len(P_prev), -1)
    pos_in_p[ip] = np.arange(ip.size)

    if corr_mode in ("gt", "ground-truth"):
        corr = match_ground_truth(P_curr, P_prev, k, sel_a=obs_c)
        corr = corr.select(pos_in_p[corr.idx_b] >= 0)
        fixed_obs = P_curr.positions[corr.idx_a] - apply_pose(T_hist, corr.pos_b)
        mem_c, mem_p = pos_in_c[corr.idx_a], pos_in_p[corr.idx_b]
    elif corr_mode == "nn":
        r_c, r_p = _instance_rigid_init(P_curr, P_prev, ic, ip, xc, yp, cfg)
    else:
        raise ValueError(f"unknown correspondence mode {corr_mode!r}")
    obs_sub = obs_c[ic]

    for S in sched.scales:
        edge = S * cfg.base_voxel
        rho = cfg.rho_fine if S == 1 else cfg.rho_coarse
        if corr_mode == "nn":
            src = np.nonzero(obs_sub)[0]
            ia, ib = nn_match(xc[src] - r_c[src], P_curr.features[ic[src]], yp,
                              P_prev.features[ip], cfg.lambda_f, workers=cfg.threads)
            mem_c = src[ia]
            mem_p = ib
            obs = xc[mem_c] - yp[mem_p]
        else:
            obs = fixed_obs
        r_c = _cell_update(xc, mem_c, obs, r_c, edge, rho)
        r_p = _cell_update(yp, mem_p, obs, r_p, edge, rho)

    Rf = ef.T_curr_to_future.R
    u_curr = u0_curr.copy()
    u_prev = u0_prev.copy()
    u_curr[ic] += r_c @ Rf.T
    u_prev[ip] += 2.0 * (r_p @ Rf.T)
    return u_prev, u_curr


def _components(cloud: PointCloud, sel):
    """8-connected image components of the points ``sel`` (indices into ``cloud``)."""
    px = cloud.source_pixel[sel]
    img = np.zeros((px[:, 1].max() + 1, px[:, 0].max() + 1), dtype=bool)
    img[px[:, 1], px[:, 0]] = True
    comps, n = ndimage.label(img, structure=np.ones((3, 3)))
    return comps[px[:, 1], px[:, 0]], n


def _instance_rigid_init(P_curr, P_prev, ic, ip, xc, yp, cfg, min_points=10, iters=50, max_shift=3.0):
    """Rigid ICP per foreground connected component, used to seed nn-mode refinement.

    Nearest-neighbour matching alone cannot see a uniform surface sliding
    along itself. Each curr component is paired with the nearest prev
    component of the same label, started from the centroid shift and then
    aligned rigidly.
    """
    r_c = np.zeros((ic.size, 3))
    r_p = np.zeros((ip.size, 3))
    fg_c = np.nonzero(~P_curr.background[ic] & (P_curr.provenance[ic] == ORIGINAL))[0]
    fg_p = np.nonzero(~P_prev.background[ip] & (P_prev.provenance[ip] == ORIGINAL))[0]
    if fg_c.size < min_points or fg_p.size < min_points:
        return r_c, r_p
    comp_c, n_c = _components(P_curr, ic[fg_c])
    comp_p, n_p = _components(P_prev, ip[fg_p])
    sf = np.sqrt(cfg.lambda_f)
    prev_parts = []
    for c in range(1, n_p + 1):
        members = fg_p[comp_p == c]
        if members.size < min_points:
            continue
        lab = np.bincount(P_prev.labels[ip[members]]).argmax()
        prev_parts.append((members, lab, yp[members].mean(axis=0)))
    if not prev_parts:
        return r_c, r_p
    for c in range(1, n_c + 1):
        members = fg_c[comp_c == c]
        if members.size < min_points:
            continue
        X = xc[members]
        lab = np.bincount(P_curr.labels[ic[members]]).argmax()
        cx = X.mean(axis=0)
        cands = [(np.linalg.norm(cen - cx), q) for q, (_, l, cen) in enumerate(prev_parts) if l == lab]
        if not cands or min(cands)[0] > max_shift:
            continue
        q = min(cands)[1]
        pm = prev_parts[q][0]
        Y = yp[pm]
        tree = cKDTree(np.hstack([Y, sf * P_prev.features[ip[pm]]]))
        fX = sf * P_curr.features[ic[members]]
        R, t = np.eye(3), prev_parts[q][2] - cx
        for _ in range(iters):
            d, j = tree.query(np.hstack([X @ R.T + t, fX]), workers=cfg.threads)
            keep = d <= max(3.0 * np.median(d), 0.25)
            if keep.sum() < 3:
                break
            R_new, t_new, S = kabsch(X[keep], Y[j[keep]])
            if S[1] <= 1e-9 * max(S[0], 1e-300):
                break
            step = np.abs(R_new - R).max() + np.abs(t_new - t).max()
            R, t = R_new, t_new
            if step < 1e-10:
                break
        # (R, t) maps curr to prev; the residual is the object's motion prev -> curr
        r_c[members] = X - (X @ R.T + t)
        r_p[pm] = (Y - t) @ R - Y
    return r_c, r_p


# --- orchestration -----------------------------------------------------------------

@dataclass
class MotionResult:
    T_hist: Pose
    ego: EgoForecast
    U0: tuple
    UL: tuple


def estimate_ego_pose(P_prev: PointCloud, P_curr: PointCloud, corr_mode, k, cfg: MotionConfig,
                      init=None) -> Pose:
    """Relative camera motion prev -> curr from background points only."""
    if corr_mode in ("gt", "ground-truth"):
        bg_prev = _usable_background(P_prev, cfg.max_register_depth)
        corr = match_ground_truth(P_prev, P_curr, k, sel_a=bg_prev)
        return estimate_relative_pose(P_prev, P_curr, corr, bg_only=True,
                                      max_depth=cfg.max_register_depth)
    return icp(P_prev, P_curr, init=init, lambda_f=cfg.lambda_f, iters=cfg.icp_iters,
               max_depth=cfg.max_register_depth, workers=cfg.threads)


def forecast_motion(P_prev: PointCloud, P_curr: PointCloud, k: CameraIntrinsics,
                    cfg: MotionConfig | None = None, init=None, T_hist: Pose | None = None) -> MotionResult:
    """Ego stage then residual stage; either can be switched off for ablations.

    The registration uses the inpainted-layer clouds' background points,
    which coincide with the original layer wherever the mask is set. A
    known ``T_hist`` (e.g. the extrapolated pose during a rollout) skips the
    registration.
    """
    cfg = cfg or MotionConfig()
    if cfg.use_emf:
        if T_hist is None:
            T_hist = estimate_ego_pose(P_prev, P_curr, cfg.corr_mode, k, cfg, init=init)
        ego = forecast_ego(T_hist)
    else:
        T_hist = Pose.identity()
        ego = EgoForecast(Pose.identity(), Pose.identity())
    U0 = ego_flow_field(ego, P_prev, P_curr)
    if cfg.use_omf:
        UL = residual_object_flow(P_prev, P_curr, U0, T_hist, ego, cfg.schedule, cfg.corr_mode, k, cfg,
                                  include_background=not cfg.use_emf)
    else:
        UL = (U0[0].copy(), U0[1].copy())
    return MotionResult(T_hist, ego, U0, UL)


__all__ = [
    "Correspondences", "EgoForecast", "MotionConfig", "MotionResult", "MultiScaleSchedule",
    "ego_flow_field", "estimate_ego_pose", "estimate_relative_pose", "forecast_ego", "forecast_motion",
    "icp", "kabsch", "match_ground_truth", "match_points", "nn_match", "residual_object_flow",
    "INPAINTED",
]
