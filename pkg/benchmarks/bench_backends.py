#!/usr/bin/env python3
"""Compare the numba and numpy kernel backends on the hot paths.

The cosine feature map is the forked kernel (fused njit loop vs BLAS gemm +
elementwise passes); the scatter accumulation and the SPD solve are shared
BLAS/LAPACK paths, timed here for context. Best-of-N wall times, JIT warmup
excluded.

Usage: python benchmarks/bench_backends.py [--quick]
"""
import argparse
import os
import time

import numpy as np


def best_of(fn, repeats=3):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller grid, one repeat")
    args = parser.parse_args()

    from klda import backends
    from klda.rff import RffConfig, build_projector

    if not backends.HAVE_NUMBA:
        raise SystemExit("numba not installed; nothing to compare")

    if args.quick:
        cases = [(2000, 128, 1024), (2000, 768, 2000)]
        repeats = 1
    else:
        cases = [(2000, 128, 1024), (5000, 768, 2000), (10000, 768, 5000)]
        repeats = 3

    rng = np.random.default_rng(0)

    print(f"{'rows':>6} {'d':>4} {'D':>5} {'numba (s)':>10} {'numpy (s)':>10} {'ratio np/nb':>11}")
    for n, d, dim in cases:
        projector = build_projector(RffConfig(d, dim, 1.0, seed=0))
        x = rng.standard_normal((n, d))
        results = {}
        for name in ("numba", "numpy"):
            os.environ[backends.BACKEND_ENV_VAR] = name
            backends.rff_transform(x[:64], projector.omega, projector.beta, projector.scale)
            results[name] = best_of(
                lambda: backends.rff_transform(x, projector.omega, projector.beta, projector.scale),
                repeats,
            )
        print(
            f"{n:>6} {d:>4} {dim:>5} {results['numba']:>10.3f} {results['numpy']:>10.3f} "
            f"{results['numpy'] / results['numba']:>11.2f}"
        )
    os.environ.pop(backends.BACKEND_ENV_VAR, None)

    print("\nshared BLAS paths (not forked by the flag):")
    for n, dim in ([(2000, 1024)] if args.quick else [(2000, 1024), (10000, 5000)]):
        z = rng.standard_normal((n, dim))
        t_scatter = best_of(lambda: backends.class_scatter(z), 1 if args.quick else 2)
        a = z.T @ z / n + np.eye(dim)
        import scipy.linalg

        t_chol = best_of(lambda: scipy.linalg.cho_factor(a.copy(), lower=True), 1)
        print(f"  scatter {n}x{dim}: {t_scatter:.3f}s   cholesky {dim}x{dim}: {t_chol:.3f}s")


if __name__ == "__main__":
    main()
