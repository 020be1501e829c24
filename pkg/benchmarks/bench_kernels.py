#!/usr/bin/env python3
"""Benchmark the compiled conv kernels against the numpy fallback.

Run:  python3 benchmarks/bench_kernels.py [--repeats N]

Covers the shapes the DDQN trainer actually hits (both conv layers at the
default batch size, on 6x6 and 10x10 grids) plus the fused RMSprop update.
"""

import argparse
import time

import numpy as np

from aoiseg.nn import kernels


def timeit(fn, repeats):
    for _ in range(max(3, repeats // 10)):
        fn()
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats * 1e3


def bench_conv(rows, cols, batch, cin, cout, repeats):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(batch, cin, rows, cols))
    w = rng.normal(size=(cout, cin, 5, 5))
    b = rng.normal(size=cout)
    dy = rng.normal(size=(batch, cout, rows, cols))

    label = f"conv {cin:>2}->{cout:<2} {rows}x{cols} b{batch}"
    out = []
    out.append((f"{label} fwd", timeit(lambda: kernels.conv2d_same_numpy(x, w, b), repeats),
                timeit(lambda: kernels.conv2d_same_compiled(x, w, b), repeats)
                if kernels.has_compiled() else None))
    out.append((f"{label} bwd", timeit(lambda: kernels.conv2d_same_bwd_numpy(x, w, dy), repeats),
                timeit(lambda: kernels.conv2d_same_bwd_compiled(x, w, dy), repeats)
                if kernels.has_compiled() else None))
    return out


def bench_rmsprop(n_params, repeats):
    rng = np.random.default_rng(1)
    params = rng.normal(size=n_params)
    grads = rng.normal(size=n_params)
    cache = np.abs(rng.normal(size=n_params))

    def numpy_step():
        cache_ = cache  # noqa: F841 - mirrors the fallback implementation
        cache *= 0.99
        cache += 0.01 * grads * grads
        params -= 1e-4 * grads / (np.sqrt(cache) + 1e-8)

    numpy_ms = timeit(numpy_step, repeats)
    compiled_ms = None
    if kernels.has_compiled():
        from aoiseg.nn import _kernels

        compiled_ms = timeit(
            lambda: _kernels.rmsprop_update(params, grads, cache, 1e-4, 0.99, 1e-8), repeats
        )
    return [(f"rmsprop {n_params} params", numpy_ms, compiled_ms)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    rows = []
    for grid in (6, 10):
        rows += bench_conv(grid, grid, batch=16, cin=7, cout=16, repeats=args.repeats)
        rows += bench_conv(grid, grid, batch=16, cin=16, cout=32, repeats=args.repeats)
    rows += bench_rmsprop(163_877, args.repeats)

    print(f"active backend: {kernels.BACKEND}")
    print(f"{'case':<28} {'numpy ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for label, numpy_ms, compiled_ms in rows:
        if compiled_ms is None:
            print(f"{label:<28} {numpy_ms:>10.3f} {'n/a':>12} {'':>8}")
        else:
            print(f"{label:<28} {numpy_ms:>10.3f} {compiled_ms:>12.3f} {numpy_ms / compiled_ms:>7.1f}x")


if __name__ == "__main__":
    main()
