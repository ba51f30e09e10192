# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; semantics mirror scenecast._pykernels exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, INFINITY

cnp.import_array()

cdef int[8] NDY = [-1, -1, -1, 0, 0, 1, 1, 1]
cdef int[8] NDX = [-1, 0, 1, -1, 1, -1, 0, 1]


def ring_inpaint(values, known):
    cdef double[:, :, ::1] val = np.array(values, dtype=np.float64, copy=True, order="C")
    cdef cnp.uint8_t[:, ::1] kn = np.array(known, dtype=np.uint8, copy=True, order="C")
    cdef Py_ssize_t h = val.shape[0], w = val.shape[1], c = val.shape[2]
    cdef cnp.uint8_t[:, ::1] ring = np.zeros((h, w), dtype=np.uint8)
    cdef double[:, :, ::1] acc = np.zeros((h, w, c), dtype=np.float64)
    cdef Py_ssize_t y, x, ch, yy, xx, remaining
    cdef int n, cnt, any_ring
    remaining = 0
    with nogil:
        for y in range(h):
            for x in range(w):
                if not kn[y, x]:
                    remaining += 1
        while remaining > 0:
            any_ring = 0
            for y in range(h):
                for x in range(w):
                    ring[y, x] = 0
                    if kn[y, x]:
                        continue
                    cnt = 0
                    for ch in range(c):
                        acc[y, x, ch] = 0.0
                    for n in range(8):
                        yy = y + NDY[n]
                        xx = x + NDX[n]
                        if yy < 0 or yy >= h or xx < 0 or xx >= w or not kn[yy, xx]:
                            continue
                        cnt += 1
                        for ch in range(c):
                            acc[y, x, ch] = acc[y, x, ch] + val[yy, xx, ch]
                    if cnt > 0:
                        ring[y, x] = 1
                        any_ring = 1
                        for ch in range(c):
                            acc[y, x, ch] = acc[y, x, ch] / cnt
            if not any_ring:
                break
            for y in range(h):
                for x in range(w):
                    if ring[y, x]:
                        kn[y, x] = 1
                        remaining -= 1
                        for ch in range(c):
                            val[y, x, ch] = acc[y, x, ch]
    if remaining > 0:
        raise ValueError("unknown pixels are unreachable from known ones")
    return np.asarray(val)


cdef inline bint _before(double za, long long ia, double zb, long long ib) noexcept nogil:
    return za < zb or (za == zb and ia < ib)


def splat_topk(u, v, z, radius, int width, int height, int k):
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef double[::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] rr = np.ascontiguousarray(radius, dtype=np.float64)
    zbuf_a = np.full((height, width, k), np.inf)
    index_a = np.full((height, width, k), -1, dtype=np.int64)
    dist2_a = np.full((height, width, k), np.inf)
    cdef double[:, :, ::1] zbuf = zbuf_a
    cdef long long[:, :, ::1] index = index_a
    cdef double[:, :, ::1] dist2 = dist2_a
    cdef Py_ssize_t n = uu.shape[0], p
    cdef long long bu, bv, R, px, py, s
    cdef double ex, ey, d2, r2, zp
    with nogil:
        for p in range(n):
            bu = <long long>floor(uu[p])
            bv = <long long>floor(vv[p])
            R = <long long>ceil(rr[p])
            r2 = rr[p] * rr[p]
            zp = zz[p]
            for py in range(bv - R, bv + R + 2):
                if py < 0 or py >= height:
                    continue
                ey = <double>py - vv[p]
                for px in range(bu - R, bu + R + 2):
                    if px < 0 or px >= width:
                        continue
                    ex = <double>px - uu[p]
                    d2 = ex * ex + ey * ey
                    if not d2 <= r2:
                        continue
                    if not _before(zp, p, zbuf[py, px, k - 1], index[py, px, k - 1]) \
                            and index[py, px, k - 1] >= 0:
                        continue
                    s = k - 1
                    while s > 0 and (index[py, px, s - 1] < 0 or
                                     _before(zp, p, zbuf[py, px, s - 1], index[py, px, s - 1])):
                        zbuf[py, px, s] = zbuf[py, px, s - 1]
                        index[py, px, s] = index[py, px, s - 1]
                        dist2[py, px, s] = dist2[py, px, s - 1]
                        s -= 1
                    zbuf[py, px, s] = zp
                    index[py, px, s] = p
                    dist2[py, px, s] = d2
    return zbuf_a, index_a, dist2_a
