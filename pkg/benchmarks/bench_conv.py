"""Benchmark the compiled convolution kernels against the numpy fallback.

Run: python3 benchmarks/bench_conv.py [--repeats N]

Both backends produce identical arrays (asserted here); the numbers show
what the compiled extension buys on the desk-scale tokenizer shapes.
"""
import argparse
import importlib
import os
import sys
import time

import numpy as np

# Desk-scale tokenizer stages: (N, H, W, C), kernel 3, stride 2, pad 1.
SHAPES = [
    (6, 144, 144, 3),
    (6, 72, 72, 16),
    (6, 36, 36, 32),
    (6, 18, 18, 64),
]


def _load_backends():
    from svla.kernels import numpy_backend

    try:
        from svla.kernels import _convops
    except ImportError:
        _convops = None
    return numpy_backend, _convops


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    numpy_backend, convops = _load_backends()
    if convops is None:
        print("compiled extension not available; nothing to compare", file=sys.stderr)
        return 1

    rng = np.random.default_rng(0)
    print(f"{'shape':>22} {'op':>8} {'numpy':>10} {'cython':>10} {'speedup':>8}")
    for shape in SHAPES:
        x = rng.standard_normal(shape).astype(np.float32)
        args_fwd = (x, 3, 3, 2, 1)
        ref = numpy_backend.im2col(*args_fwd)
        got = convops.im2col(*args_fwd)
        assert np.array_equal(ref, got), "backend outputs differ"

        t_np = _time(lambda: numpy_backend.im2col(*args_fwd), args.repeats)
        t_cy = _time(lambda: convops.im2col(*args_fwd), args.repeats)
        print(
            f"{str(shape):>22} {'im2col':>8} {t_np * 1e3:9.2f}ms {t_cy * 1e3:9.2f}ms "
            f"{t_np / t_cy:7.2f}x"
        )

        cols = ref
        args_bwd = (cols, shape, 3, 3, 2, 1)
        ref_b = numpy_backend.col2im(*args_bwd)
        got_b = convops.col2im(*args_bwd)
        assert np.allclose(ref_b, got_b, atol=1e-5), "col2im outputs differ"

        t_np = _time(lambda: numpy_backend.col2im(*args_bwd), args.repeats)
        t_cy = _time(lambda: convops.col2im(*args_bwd), args.repeats)
        print(
            f"{str(shape):>22} {'col2im':>8} {t_np * 1e3:9.2f}ms {t_cy * 1e3:9.2f}ms "
            f"{t_np / t_cy:7.2f}x"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
