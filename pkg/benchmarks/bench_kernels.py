"""Benchmark the compiled kernels against the numpy fallback.

Run after building the extension:

    python benchmarks/bench_kernels.py

Shapes mirror the evaluation workload (32x32x64 grids, 16 SLIC centers
per grid, 5-part K-means).
"""

import time

import numpy as np

from partproto._kernels import _numpy

try:
    from partproto._kernels import _native
except ImportError:
    _native = None


def timeit(fn, *args, repeat=20):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    cells = rng.standard_normal((1024, 64))
    protos = rng.standard_normal((10, 64))
    pos = np.ascontiguousarray(
        np.stack(np.meshgrid(np.arange(32.0), np.arange(32.0), indexing="ij"), -1).reshape(-1, 2)
    )
    init = ((np.arange(32) * 4 // 32)[:, None] * 4 + (np.arange(32) * 4 // 32)[None, :]).ravel()
    points = rng.standard_normal((512, 64))
    cents = points[rng.choice(512, 5, replace=False)].copy()
    stack = rng.standard_normal((2, 32, 32)).astype(np.float32)

    cases = [
        ("pairwise cosine 1024x10x64", "cosine_parts", (cells, protos)),
        ("sq. distances 512x5x64", "sqdist_matrix", (points, cents)),
        ("kmeans lloyd 512 pts k=5", "kmeans_lloyd", (points, cents, 50, 1e-6)),
        ("slic 1024 cells 16 ctr x10", "slic_iterate", (cells, pos, init, 16, 0.025, 10)),
        ("bilinear 2ch 32->256", "bilinear_resize", (stack, 256, 256)),
    ]

    backends = [("numpy", _numpy)] + ([("native", _native)] if _native else [])
    print(f"{'kernel':34s}" + "".join(f"{name:>12s}" for name, _ in backends) + f"{'speedup':>10s}")
    for label, fn_name, args in cases:
        times = [timeit(getattr(mod, fn_name), *args) for _, mod in backends]
        row = f"{label:34s}" + "".join(f"{t * 1e3:10.3f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
