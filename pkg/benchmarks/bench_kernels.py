"""Benchmark the compiled kernels against their pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeats 5]

Sizes mirror a mid-sized run: a few thousand documents, a few hundred
classes, tens of thousands of candidate terms. Each kernel is warmed
before timing so JIT compilation is excluded.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from teleclass import kernels


def best_of(fn, args, repeats):
    times = []
    for _ in range(repeats):
        started = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - started)
    return min(times)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if kernels.pairwise_cosine_numba is None:
        raise SystemExit(
            "numba variants unavailable (TELECLASS_PURE_NUMPY set or numba missing); "
            "nothing to compare"
        )

    rng = np.random.default_rng(0)
    cases = [
        (
            "pairwise_cosine (4000x384 vs 300x384)",
            kernels.pairwise_cosine_numpy,
            kernels.pairwise_cosine_numba,
            (rng.normal(size=(4000, 384)), rng.normal(size=(300, 384))),
        ),
        (
            "gap_cut (5000 docs x 300 classes)",
            kernels.gap_cut_numpy,
            kernels.gap_cut_numba,
            (-np.sort(-rng.random((5000, 300)), axis=1),),
        ),
        (
            "bm25_matrix (30000 terms x 40 classes)",
            kernels.bm25_matrix_numpy,
            kernels.bm25_matrix_numba,
            (
                np.where(rng.random((30000, 40)) < 0.2, rng.integers(1, 9, (30000, 40)), 0).astype(
                    float
                ),
                rng.integers(500, 5000, 40).astype(float),
                1.2,
                0.75,
            ),
        ),
        (
            "masked_bce (512 docs x 300 classes)",
            kernels.masked_bce_numpy,
            kernels.masked_bce_numba,
            (
                rng.normal(size=(512, 300)) * 3,
                (rng.random((512, 300)) < 0.1).astype(float),
                (rng.random((512, 300)) < 0.9).astype(float),
                rng.random(512) + 0.5,
                False,
            ),
        ),
    ]

    print(f"{'kernel':44s} {'numpy':>10s} {'numba':>10s} {'speedup':>9s}")
    for name, np_fn, nb_fn, case_args in cases:
        nb_fn(*case_args)  # JIT warmup
        t_np = best_of(np_fn, case_args, args.repeats)
        t_nb = best_of(nb_fn, case_args, args.repeats)
        print(f"{name:44s} {t_np * 1e3:8.2f}ms {t_nb * 1e3:8.2f}ms {t_np / t_nb:8.2f}x")


if __name__ == "__main__":
    main()
