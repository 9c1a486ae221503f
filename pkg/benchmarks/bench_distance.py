"""Benchmark the compiled nearest-distance kernel against the numpy fallback.

Usage: python3 benchmarks/bench_distance.py [--pairs 50] [--size 256]
"""

import argparse
import time

import numpy as np

from dfseg.metrics import (
    KERNEL_BACKEND,
    nearest_distances_numpy,
    surface_points,
)

try:
    from dfseg import _distkernel
except ImportError:
    _distkernel = None


def blobby_mask(rng, size):
    field = rng.random((size, size))
    for _ in range(3):
        field = (
            field
            + np.roll(field, 1, 0) + np.roll(field, -1, 0)
            + np.roll(field, 1, 1) + np.roll(field, -1, 1)
        ) / 5.0
    return field > np.quantile(field, 0.8)


def run(pairs, size):
    rng = np.random.default_rng(0)
    point_sets = []
    for _ in range(pairs):
        a = surface_points(blobby_mask(rng, size)).astype(np.float64)
        b = surface_points(blobby_mask(rng, size)).astype(np.float64)
        point_sets.append((a, b))
    mean_pts = np.mean([len(a) for a, _ in point_sets])
    print(f"{pairs} mask pairs at {size}x{size}, mean surface size {mean_pts:.0f} points")

    t0 = time.perf_counter()
    for a, b in point_sets:
        nearest_distances_numpy(a, b)
        nearest_distances_numpy(b, a)
    t_numpy = time.perf_counter() - t0
    print(f"numpy fallback : {t_numpy:.3f}s")

    if _distkernel is None:
        print("compiled kernel: not built (install with Cython available)")
        return
    t0 = time.perf_counter()
    for a, b in point_sets:
        _distkernel.nearest_distances(np.ascontiguousarray(a), np.ascontiguousarray(b))
        _distkernel.nearest_distances(np.ascontiguousarray(b), np.ascontiguousarray(a))
    t_compiled = time.perf_counter() - t0
    print(f"compiled kernel: {t_compiled:.3f}s  ({t_numpy / t_compiled:.1f}x vs numpy)")
    print(f"selected backend at import: {KERNEL_BACKEND}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--pairs", type=int, default=50)
    parser.add_argument("--size", type=int, default=256)
    args = parser.parse_args()
    run(args.pairs, args.size)
