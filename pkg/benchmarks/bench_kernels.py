"""Compiled vs numpy kernel timings.

Run with ``python3 benchmarks/bench_kernels.py [--voxels 1024] [--repeat 3]``.
The first compiled call is excluded (JIT warm-up).
"""

import argparse
import time

import numpy as np

from parcelforge import _kernels
from parcelforge.core_data import VolumeGrid
from parcelforge.parcellate import build_graph


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n_voxels, rng):
    side = int(round((n_voxels / 4) ** 0.5))
    grid = VolumeGrid.full((side, side, 4))
    g = build_graph(grid, rng.normal(size=(grid.n_voxels, 3)))
    x = rng.normal(size=(grid.n_voxels, 20))
    centers = x[rng.choice(len(x), 40, replace=False)]
    pts = rng.normal(size=(150, 3))
    dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    order = rng.permutation(grid.n_voxels)
    coords = grid.coords().astype(float)
    return {
        f"shortest paths (V={grid.n_voxels})": (
            lambda: _kernels.apsp_numba(g.indptr, g.indices, g.weights),
            lambda: _kernels.apsp_numpy(g.indptr, g.indices, g.weights)),
        "ward (M=150)": (
            lambda: _kernels.ward_numba(dist, 149),
            lambda: _kernels.ward_numpy(dist, 149)),
        f"lloyd (V={grid.n_voxels}, k=40)": (
            lambda: _kernels.lloyd_numba(x, centers.copy(), 300, 1e-9),
            lambda: _kernels.lloyd_numpy(x, centers.copy(), 300, 1e-9)),
        f"greedy seeds (V={grid.n_voxels}, n=30)": (
            lambda: _kernels.greedy_seeds_numba(order, coords, 9.0, 30),
            lambda: _kernels.greedy_seeds_numpy(order, coords, 9.0, 30)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--voxels", type=int, default=1024)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speed-up':>9s}")
    for name, (fast, slow) in cases(args.voxels, rng).items():
        fast()
        tf, ts = best_of(fast, args.repeat), best_of(slow, args.repeat)
        print(f"{name:40s} {tf:10.4f} {ts:10.4f} {ts / tf:8.1f}x")


if __name__ == "__main__":
    main()
