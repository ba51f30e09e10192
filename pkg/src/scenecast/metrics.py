"""Image, pose and flow error metrics, plus the plain-text report table."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .geometry import Pose, pose_compose, pose_inverse, rotation_angle

C1 = 0.01 ** 2
C2 = 0.03 ** 2
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MAX_AUTO_LEVELS = 4


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    return a, b


def l1_error(a, b):
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def psnr(a, b, peak=1.0):
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak ** 2 / mse)


def _blur(x, sigma, window):
    # separable Gaussian truncated to the window, reflective borders
    trunc = (window // 2) / sigma
    out = ndimage.gaussian_filter1d(x, sigma, axis=0, mode="reflect", truncate=trunc)
    return ndimage.gaussian_filter1d(out, sigma, axis=1, mode="reflect", truncate=trunc)


def _ssim_terms(a, b, window, sigma):
    """Per-pixel luminance and contrast-structure maps, averaged over channels."""
    lum = np.zeros(a.shape[:2])
    cs = np.zeros(a.shape[:2])
    for c in range(a.shape[2]):
        x, y = a[:, :, c], b[:, :, c]
        mx, my = _blur(x, sigma, window), _blur(y, sigma, window)
        sxx = _blur(x * x, sigma, window) - mx * mx
        syy = _blur(y * y, sigma, window) - my * my
        sxy = _blur(x * y, sigma, window) - mx * my
        lum += (2 * mx * my + C1) / (mx * mx + my * my + C1)
        cs += (2 * sxy + C2) / (sxx + syy + C2)
    n = a.shape[2]
    return lum / n, cs / n


def ssim_map(a, b, window=11, sigma=1.5):
    a, b = _pair(a, b)
    if a.shape[0] < window or a.shape[1] < window:
        raise ValueError(f"image smaller than the {window}px SSIM window")
    m = np.zeros(a.shape[:2])
    for c in range(a.shape[2]):
        lum, cs = _ssim_terms(a[:, :, c:c + 1], b[:, :, c:c + 1], window, sigma)
        m += lum * cs
    return m / a.shape[2]


def ssim(a, b, window=11, sigma=1.5):
    a, b = _pair(a, b)
    if np.array_equal(a, b):
        return 1.0
    return float(np.mean(ssim_map(a, b, window, sigma)))


def max_levels(shape, window=11):
    """Largest level count whose coarsest image still holds one window."""
    m = min(shape[0], shape[1])
    levels = 0
    while m >= window * 2 ** levels:
        levels += 1
    return levels


def ms_ssim(a, b, levels=None, window=11, sigma=1.5, weights=MS_SSIM_WEIGHTS):
    """Multi-scale SSIM.

    ``levels=None`` uses as many of the standard levels as the image allows
    (capped at four for the default 128-row frames), with the weights of the
    retained levels renormalised to sum to one.
    """
    a, b = _pair(a, b)
    if levels is None:
        levels = min(len(weights), max(1, max_levels(a.shape, window)))
    if levels < 1 or levels > len(weights):
        raise ValueError(f"levels must be in 1..{len(weights)}")
    need = window * 2 ** (levels - 1)
    if min(a.shape[:2]) < need:
        raise ValueError(f"image too small for {levels} levels: need min dimension >= {need}")
    w = np.asarray(weights[:levels], dtype=np.float64)
    w = w / w.sum()
    vals = []
    for lev in range(levels):
        lum, cs = _ssim_terms(a, b, window, sigma)
        if lev == levels - 1:
            vals.append(np.mean(lum * cs))
        else:
            vals.append(np.mean(cs))
            a, b = _downsample(a), _downsample(b)
    vals = np.maximum(np.asarray(vals), 0.0)
    return float(np.prod(vals ** w))


def _downsample(x):
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def pose_error(est: Pose, gt: Pose):
    """Geodesic rotation gap in degrees and translation gap in metres."""
    d = pose_compose(pose_inverse(gt), est)
    return float(np.degrees(rotation_angle(d))), float(np.linalg.norm(est.t - gt.t))


def epe_3d(est, gt):
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape:
        raise ValueError(f"flow length mismatch: {est.shape} vs {gt.shape}")
    if est.size == 0:
        return 0.0
    return float(np.mean(np.linalg.norm(est - gt, axis=1)))


def frame_metrics(pred, gt):
    return {"ssim": ssim(pred, gt), "ms_ssim": ms_ssim(pred, gt), "l1": l1_error(pred, gt),
            "psnr": psnr(pred, gt)}


BASE_COLUMNS = ("step", "ssim", "ms_ssim", "l1", "psnr")
EXTRA_COLUMNS = ("pose_rot", "pose_trans", "epe3d")


def format_report(rows, title=None):
    """Plain-text table, one row per step, followed by a mean row.

    Each row is a dict; the pose and flow columns appear when any row has them.
    """
    cols = list(BASE_COLUMNS)
    cols += [c for c in EXTRA_COLUMNS if any(c in r for r in rows)]
    lines = []
    if title:
        lines.append(f"# {title}")
    lines.append("# LPIPS not computed; ssim, ms_ssim and l1 cover perceptual quality")
    lines.append(" ".join(f"{c:>10}" for c in cols))
    for r in rows:
        lines.append(" ".join(_cell(r, c) for c in cols))
    if rows:
        mean = {"step": "mean"}
        for c in cols[1:]:
            vals = [r[c] for r in rows if c in r]
            mean[c] = float(np.mean(vals)) if vals else None
        lines.append(" ".join(_cell(mean, c) for c in cols))
    return "\n".join(lines) + "\n"


def _cell(row, col):
    v = row.get(col)
    if v is None:
        return f"{'-':>10}"
    if col == "step":
        return f"{v!s:>10}"
    return f"{v:>10.6f}"


def parse_report(text):
    """Rows of a report written by format_report, the mean row excluded."""
    rows = []
    header = None
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if header is None:
            header = parts
            continue
        if parts[0] == "mean":
            continue
        row = {"step": int(parts[0])}
        for c, p in zip(header[1:], parts[1:]):
            if p != "-":
                row[c] = float(p)
        rows.append(row)
    return rows
