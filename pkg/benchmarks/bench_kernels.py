"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is run on inputs sized like a 128x256 forecast step; outputs of
the two backends are checked for bit equality before timing.
"""

import argparse
import timeit

import numpy as np

from scenecast import _pykernels, kernels

try:
    from scenecast import _ckernels
except ImportError:
    _ckernels = None


def splat_inputs(rng, width=256, height=128, n=40_000):
    u = rng.uniform(0, width, n)
    v = rng.uniform(0, height, n)
    z = rng.uniform(2, 60, n)
    r = np.maximum(150 * 0.03 / z, 0.9)
    return (u, v, z, r, width, height, 4)


def inpaint_inputs(rng, width=256, height=128):
    values = rng.uniform(size=(height, width, 4))
    known = np.ones((height, width), bool)
    known[40:90, 60:120] = False  # one car-sized hole
    known[20:50, 180:200] = False
    return (values, known)


def bench(name, fn, args, repeat):
    t = min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))
    return name, t


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    opts = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = {"splat_topk": splat_inputs(rng), "ring_inpaint": inpaint_inputs(rng)}
    print(f"dispatch backend: {kernels.BACKEND}")
    print(f"{'kernel':<14} {'numpy (ms)':>12} {'cython (ms)':>12} {'speedup':>8}")
    for kernel, args in cases.items():
        py = getattr(_pykernels, kernel)
        _, t_py = bench(kernel, py, args, opts.repeat)
        if _ckernels is None:
            print(f"{kernel:<14} {1e3 * t_py:>12.2f} {'-':>12} {'-':>8}")
            continue
        c = getattr(_ckernels, kernel)
        a, b = py(*args), c(*args)
        same = all(np.array_equal(x, y) for x, y in zip(a, b)) if isinstance(a, tuple) else np.array_equal(a, b)
        if not same:
            raise SystemExit(f"{kernel}: backends disagree")
        _, t_c = bench(kernel, c, args, opts.repeat)
        print(f"{kernel:<14} {1e3 * t_py:>12.2f} {1e3 * t_c:>12.2f} {t_py / t_c:>7.1f}x")
    args = cases["splat_topk"]
    for threads in (1, 4, 8):
        _, t = bench("splat", lambda *a: kernels.splat_topk(*a, threads=threads), args, opts.repeat)
        print(f"splat_topk dispatch, {threads} thread(s): {1e3 * t:.2f} ms")


if __name__ == "__main__":
    main()
