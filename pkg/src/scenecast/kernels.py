"""Kernel dispatch: compiled extension when built, numpy fallback otherwise.

Set ``SCENECAST_PURE_PYTHON=1`` to force the fallback.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("SCENECAST_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def ring_inpaint(values, known):
    return _impl.ring_inpaint(values, known)


def _merge_topk(parts, k):
    zb = np.concatenate([p[0] for p in parts], axis=2)
    ix = np.concatenate([p[1] for p in parts], axis=2)
    d2 = np.concatenate([p[2] for p in parts], axis=2)
    # empty slots (index -1) sort last via their inf depth; ties broken by index
    ix_key = np.where(ix < 0, np.iinfo(np.int64).max, ix)
    order = np.lexsort((ix_key, zb), axis=2)[:, :, :k]
    take = lambda a: np.take_along_axis(a, order, axis=2)  # noqa: E731
    return take(zb), take(ix), take(d2)


def splat_topk(u, v, z, radius, width, height, k, threads=1, impl=None):
    """Dispatch the disc splatting kernel, optionally over point chunks in threads.

    Chunk results are merged by (depth, index), so output is independent of
    the thread count.
    """
    mod = impl or _impl
    n = len(u)
    if threads <= 1 or n < 2 * threads:
        return mod.splat_topk(u, v, z, radius, width, height, k)
    bounds = np.linspace(0, n, threads + 1).astype(int)

    def run(a, b):
        zb, ix, d2 = mod.splat_topk(u[a:b], v[a:b], z[a:b], radius[a:b], width, height, k)
        ix = np.where(ix >= 0, ix + a, ix)
        return zb, ix, d2

    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(lambda ab: run(*ab), zip(bounds[:-1], bounds[1:])))
    return _merge_topk(parts, k)
