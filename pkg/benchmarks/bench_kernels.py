"""Benchmark the compiled MaxSim scoring kernel against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]

Times both backends on a sweep of (queries, classes, tokens, dim) shapes
drawn from realistic inference workloads and reports the median runtime
and speedup. Requires the extension to be built (pip install -e .); if it
is missing, only the numpy fallback is timed.
"""

import argparse
import time

import numpy as np

from fewfit import kernels

SHAPES = [
    # (n_queries, query_len, n_classes, class_len, dim)
    (64, 8, 50, 4, 64),
    (256, 16, 50, 4, 64),
    (256, 32, 150, 8, 64),
    (1024, 16, 50, 4, 64),
    (1024, 32, 500, 8, 128),
]


def make_inputs(shape, seed=0):
    Q, Lq, M, Lm, d = shape
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(Q, Lq, d)).astype(np.float32)
    docs = rng.normal(size=(M, Lm, d)).astype(np.float32)
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    docs /= np.linalg.norm(docs, axis=-1, keepdims=True)
    qn = rng.integers(1, Lq + 1, size=Q)
    dn = rng.integers(1, Lm + 1, size=M)
    return q, qn, docs, dn


def median_time(fn, args, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"compiled backend available: {kernels.HAVE_COMPILED}")
    header = f"{'shape (Q,Lq,M,Lm,d)':>24} {'numpy':>10} {'cython':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for shape in SHAPES:
        inputs = make_inputs(shape)
        t_np = median_time(kernels.maxsim_scores_numpy, inputs, args.repeats)
        if kernels.HAVE_COMPILED:
            t_cy = median_time(
                kernels.maxsim_scores_compiled, inputs, args.repeats
            )
            a = kernels.maxsim_scores_numpy(*inputs)
            b = kernels.maxsim_scores_compiled(*inputs)
            assert np.allclose(a, b, atol=1e-4), "backends disagree"
            print(
                f"{str(shape):>24} {t_np * 1e3:9.2f}ms {t_cy * 1e3:9.2f}ms"
                f" {t_np / t_cy:7.2f}x"
            )
        else:
            print(f"{str(shape):>24} {t_np * 1e3:9.2f}ms {'n/a':>10} {'n/a':>8}")


if __name__ == "__main__":
    main()
