"""Time the numba kernels against their pure-numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--samples N] [--dim D] [--classes K]

Runs each kernel through both implementations on the same inputs and
prints per-call timings plus the speedup. The numba path is warmed once
so JIT compilation is not counted.
"""

import argparse
import time

import numpy as np

from oms_bench import _kernels


def _time(fn, *args, repeats=5):
    fn(*args)  # warm-up (and JIT compile for the numba variants)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--samples", type=int, default=100_000)
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--classes", type=int, default=10)
    args = parser.parse_args()

    if not _kernels._HAVE_NUMBA:
        raise SystemExit("numba is unavailable or disabled; nothing to compare")

    rng = np.random.default_rng(0)
    x = rng.normal(size=(args.samples, args.dim))
    means = rng.normal(size=(args.classes, args.dim))
    a = rng.normal(size=(args.dim, args.dim))
    inv_cov = a @ a.T + np.eye(args.dim)

    boxes_per_class = 3
    n_boxes = args.classes * boxes_per_class
    lowers = rng.normal(loc=-2.0, size=(n_boxes, args.dim))
    uppers = lowers + np.abs(rng.normal(size=(n_boxes, args.dim))) + 0.5
    box_classes = np.repeat(np.arange(args.classes, dtype=np.int64), boxes_per_class)
    pred = rng.integers(0, args.classes, size=args.samples).astype(np.int64)

    kx = x[: min(args.samples, 20_000)]
    centers = _kernels.farthest_point_init(kx, args.classes)

    rows = [
        (
            "mahalanobis_min_sq",
            _time(_kernels._mahalanobis_min_sq_numba, x, means, inv_cov),
            _time(_kernels._mahalanobis_min_sq_numpy, x, means, inv_cov),
        ),
        (
            "outside_boxes",
            _time(_kernels._outside_boxes_numba, x, lowers, uppers, box_classes, pred),
            _time(_kernels._outside_boxes_numpy, x, lowers, uppers, box_classes, pred),
        ),
        (
            "lloyd (20k pts)",
            _time(_kernels._lloyd_numba, kx, centers, 100),
            _time(_kernels._lloyd_numpy, kx, centers, 100),
        ),
    ]

    print(f"N={args.samples} d={args.dim} K={args.classes}")
    print(f"{'kernel':<22}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for name, fast, ref in rows:
        print(f"{name:<22}{fast * 1e3:>10.2f}ms{ref * 1e3:>10.2f}ms{ref / fast:>9.1f}x")


if __name__ == "__main__":
    main()
