"""Pure numpy implementations of the hot kernels.

These define the reference semantics; the compiled twins in ``_ckernels``
must agree with them (bit-identically for integer/ordering outputs).
"""

import numpy as np

# 8-neighbour offsets in the order their contributions are summed.
NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def ring_inpaint(values, known):
    values = np.array(values, dtype=np.float64, copy=True)
    known = np.array(known, dtype=bool, copy=True)
    h, w, c = values.shape
    while not known.all():
        pv = np.zeros((h + 2, w + 2, c))
        pk = np.zeros((h + 2, w + 2), dtype=bool)
        pv[1:-1, 1:-1] = np.where(known[:, :, None], values, 0.0)
        pk[1:-1, 1:-1] = known
        acc = np.zeros((h, w, c))
        cnt = np.zeros((h, w), dtype=np.int64)
        for dy, dx in NEIGHBOURS:
            acc += pv[1 + dy:h + 1 + dy, 1 + dx:w + 1 + dx]
            cnt += pk[1 + dy:h + 1 + dy, 1 + dx:w + 1 + dx]
        ring = ~known & (cnt > 0)
        if not ring.any():
            raise ValueError("unknown pixels are unreachable from known ones")
        values[ring] = acc[ring] / cnt[ring][:, None]
        known |= ring
    return values


def splat_topk(u, v, z, radius, width, height, k):
    """Per-pixel k nearest (by depth, then index) discs covering each pixel centre.

    Returns ``(zbuf, index, dist2)`` of shape (H, W, k); empty slots hold
    ``inf``, ``-1`` and ``inf``.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    radius = np.asarray(radius, dtype=np.float64)
    n = u.size
    zbuf = np.full((height, width, k), np.inf)
    index = np.full((height, width, k), -1, dtype=np.int64)
    dist2 = np.full((height, width, k), np.inf)
    if n == 0:
        return zbuf, index, dist2

    ids = np.arange(n, dtype=np.int64)
    base_u = np.floor(u).astype(np.int64)
    base_v = np.floor(v).astype(np.int64)
    reach = np.ceil(radius).astype(np.int64)
    cand_pix, cand_z, cand_idx, cand_d2 = [], [], [], []
    for R in np.unique(reach):
        sel = np.nonzero(reach == R)[0]
        su, sv, sr2 = u[sel], v[sel], radius[sel] ** 2
        bu, bv = base_u[sel], base_v[sel]
        for dy in range(-R, R + 2):
            py = bv + dy
            ey = py - sv
            oky = (py >= 0) & (py < height)
            for dx in range(-R, R + 2):
                px = bu + dx
                ex = px - su
                d2 = ex * ex + ey * ey
                ok = oky & (px >= 0) & (px < width) & (d2 <= sr2)
                if not ok.any():
                    continue
                cand_pix.append(py[ok] * width + px[ok])
                cand_z.append(z[sel][ok])
                cand_idx.append(ids[sel][ok])
                cand_d2.append(d2[ok])
    if not cand_pix:
        return zbuf, index, dist2
    pix = np.concatenate(cand_pix)
    cz = np.concatenate(cand_z)
    ci = np.concatenate(cand_idx)
    cd = np.concatenate(cand_d2)
    order = np.lexsort((ci, cz, pix))
    pix, cz, ci, cd = pix[order], cz[order], ci[order], cd[order]
    starts = np.r_[0, np.nonzero(np.diff(pix))[0] + 1]
    group_start = np.repeat(starts, np.diff(np.r_[starts, pix.size]))
    rank = np.arange(pix.size) - group_start
    keep = rank < k
    pix, cz, ci, cd, rank = pix[keep], cz[keep], ci[keep], cd[keep], rank[keep]
    rows, cols = pix // width, pix % width
    zbuf[rows, cols, rank] = cz
    index[rows, cols, rank] = ci
    dist2[rows, cols, rank] = cd
    return zbuf, index, dist2
