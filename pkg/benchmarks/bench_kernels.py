#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times the three hot paths on realistic desk-scale inputs and prints a
speedup table. Run after an editable install:

    python benchmarks/bench_kernels.py [--repeats 7]
"""

import argparse
import time

import numpy as np

from volstream.kernels import available_backends, get_backend


def _timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def make_cases(rng):
    prev = rng.random((192, 192))
    cur = np.clip(prev + rng.normal(0, 0.02, prev.shape), 0, 1)
    ys, xs = np.mgrid[4:188:1, 4:188:1]
    xs = xs.ravel().astype(np.int64)
    ys = ys.ravel().astype(np.int64)

    gray = (rng.random((192, 192)) * 255).astype(np.uint8)

    n = 120_000
    us = rng.uniform(0, 192, n)
    vs = rng.uniform(0, 192, n)
    zs = rng.uniform(0.5, 4.0, n)
    cols = rng.integers(0, 255, (n, 3)).astype(np.uint8)

    return {
        "lk_points (34k pts, win 5)":
            lambda b: b.lk_points(prev, cur, xs, ys, 5, 1e-4, 2),
        "fast_scores (192x192)":
            lambda b: b.fast_scores(gray, 20),
        "splat_render (120k pts, r2)":
            lambda b: b.splat_render(us, vs, zs, cols, 2, 192, 192),
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled extension not available; showing python backend only")
    cases = make_cases(np.random.default_rng(42))

    width = max(len(k) for k in cases)
    header = f"{'kernel':<{width}}" + "".join(f"{b:>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, fn in cases.items():
        times = [_timeit(lambda b=get_backend(bk): fn(b), args.repeats)
                 for bk in backends]
        row = f"{name:<{width}}" + "".join(f"{t * 1e3:>12.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
