#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Both backends implement identical operation sequences, so outputs must be
bit-identical; this script verifies that and reports the speedup on the
shapes the training loop actually uses.

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

import morphal._pykernels as pyk

try:
    import morphal._ckernels as cyk
except ImportError:
    cyk = None

ACT_SIGMOID = 2


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(name, make_args, call, py_repeats, cy_repeats):
    if cyk is not None:
        # One call on identical fresh inputs must agree bit for bit
        # (kernels may mutate their arguments, so compare single calls).
        args_py = make_args()
        args_cy = make_args()
        call(pyk, *args_py)
        call(cyk, *args_cy)
        for a, b in zip(args_py, args_cy):
            if isinstance(a, np.ndarray) and not (a == b).all():
                raise AssertionError(f"{name}: backends disagree")

    args = make_args()
    t_py = timeit(lambda: call(pyk, *args), py_repeats)
    row = f"{name:<34} python {t_py * 1e3:9.3f} ms"
    if cyk is not None:
        args = make_args()
        t_cy = timeit(lambda: call(cyk, *args), cy_repeats)
        row += f"   cython {t_cy * 1e3:9.3f} ms   speedup {t_py / t_cy:8.1f}x"
    print(row)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true",
                        help="fewer repetitions")
    args = parser.parse_args()
    reps = (2, 20) if args.quick else (5, 200)

    n, fin, fout = 64, 256, 64

    print(f"backends: python{'' if cyk is None else ' + cython'}; "
          f"batch={n}, fan_in={fin}, fan_out={fout}\n")

    def forward_args():
        rng = np.random.default_rng(0)
        return (rng.standard_normal((n, fin)),
                rng.standard_normal((fout, fin)),
                rng.standard_normal(fout),
                np.empty((n, fout)))

    bench_case("dense_forward (sigmoid)", forward_args,
               lambda k, x, w, b, out: k.dense_forward(x, w, b, ACT_SIGMOID, out),
               *reps)

    def backward_args():
        rng = np.random.default_rng(1)
        x = rng.standard_normal((n, fin))
        w = rng.standard_normal((fout, fin))
        a = rng.uniform(0.01, 0.99, (n, fout))
        g = rng.standard_normal((n, fout))
        return (g, a, x, w, np.empty_like(w), np.empty(fout), np.empty_like(x))

    bench_case("dense_backward (sigmoid, +gx)", backward_args,
               lambda k, g, a, x, w, gw, gb, gx:
                   k.dense_backward(g, a, x, w, ACT_SIGMOID, gw, gb, gx),
               *reps)

    def adam_args():
        rng = np.random.default_rng(2)
        size = fin * fout
        return (rng.standard_normal(size), rng.standard_normal(size),
                np.zeros(size), np.zeros(size))

    bench_case("adam_step (16k params)", adam_args,
               lambda k, p, g, m, v: k.adam_step(p, g, m, v, 1, 1e-3, 0.9,
                                                 0.999, 1e-8),
               *reps)

    def loss_args():
        rng = np.random.default_rng(3)
        p = rng.uniform(0.01, 0.99, n * fin)
        y = (rng.uniform(size=n * fin) > 0.5).astype(float)
        return (p, y, np.empty(n * fin))

    bench_case("bce_loss_grad (16k elems)", loss_args,
               lambda k, p, y, g: k.bce_loss_grad(p, y, g, 1e-7),
               *reps)

    if cyk is None:
        print("\ncompiled kernels unavailable; install with a C compiler "
              "to compare")


if __name__ == "__main__":
    main()
