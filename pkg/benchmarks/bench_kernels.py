"""Benchmark the numba kernels against their pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeat N]

The same pairs are importable regardless of the CADD_NO_NUMBA flag, so this
script times both paths side by side (numba timings exclude the first JIT
call).
"""

import argparse
import time

import numpy as np

from cadd import kernels


def _time(fn, args, repeat):
    fn(*args)  # warm-up (JIT compile for the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def make_cases(rng):
    n_rays = 64 * 64
    dirs = rng.standard_normal((n_rays, 3))
    dirs[:, 2] = np.abs(dirs[:, 2]) + 0.5
    origin = np.array([0.1, -0.2, -1.5])
    half = np.array([0.2, 0.18, 0.15])

    points = rng.uniform(-0.3, 0.3, size=(4000, 3))
    rot = np.eye(3)
    t = np.array([0.0, 0.0, -1.0])
    depth = np.abs(rng.normal(1.0, 0.05, size=(64, 64)))
    mask = rng.random((64, 64)) < 0.8

    x = rng.standard_normal((600, 192))
    centroids = rng.standard_normal((10, 192))

    values = rng.standard_normal((128, 128, 5)).astype(np.float32)
    query = rng.standard_normal(5).astype(np.float32)

    ys = rng.integers(0, 64, size=8192)
    xs = rng.integers(0, 64, size=8192)
    vals = rng.standard_normal((8192, 5)).astype(np.float32)
    grad = np.zeros((5, 64, 64), dtype=np.float32)

    return {
        "raycast_box": (origin, dirs, half),
        "reproject_check": (points, rot, t, 55.0, 55.0, 31.5, 31.5, depth, mask, 0.003),
        "kmeans_assign": (x, centroids),
        "distance_field": (values, query),
        "scatter_add_chw": (grad, ys, xs, vals),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    cases = make_cases(rng)
    print(f"numba available: {kernels.NUMBA_AVAILABLE}")
    print(f"{'kernel':<18} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    for name, (fn_numba, fn_numpy) in kernels.KERNEL_PAIRS.items():
        case = cases[name]
        t_np = _time(fn_numpy, case, args.repeat)
        if kernels.NUMBA_AVAILABLE:
            t_nb = _time(fn_numba, case, args.repeat)
            print(f"{name:<18} {t_nb * 1e3:>10.3f}ms {t_np * 1e3:>10.3f}ms {t_np / t_nb:>8.1f}x")
        else:
            print(f"{name:<18} {'n/a':>12} {t_np * 1e3:>10.3f}ms {'':>9}")


if __name__ == "__main__":
    main()
