"""Hot numeric kernels: numba fast path with a pure-numpy fallback.

The env flag ``KLDA_BACKEND`` selects the implementation of the cosine
feature map: ``numba`` (default when importable) or ``numpy``. The numba
kernel fuses projection, phase shift and cosine into one pass and is
bit-reproducible for any thread count: rows are assigned to fixed blocks
and each output entry accumulates its dot product in ascending input-index
order, so the schedule cannot change the arithmetic.

The within-class scatter is a blocked BLAS syrk-style product under both
backends; a hand-written njit matmul cannot beat BLAS there, so the flag
intentionally does not fork it. ``benchmarks/bench_backends.py`` compares
the two transform paths.
"""
from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on numba-less installs
    HAVE_NUMBA = False

BACKEND_ENV_VAR = "KLDA_BACKEND"

# Row block for the fused transform: bounds the per-thread buffer at
# _ROW_BLOCK x D while letting each streamed omega row be reused across
# the block. Fixed constant, part of the determinism contract.
_ROW_BLOCK = 32

# Row block for the scatter accumulation: bounds the centered temporary.
_SCATTER_BLOCK = 1024


def active_backend() -> str:
    """Resolve backend name from KLDA_BACKEND, defaulting to numba when present."""
    name = os.environ.get(BACKEND_ENV_VAR, "").strip().lower()
    if not name:
        return "numba" if HAVE_NUMBA else "numpy"
    if name not in ("numba", "numpy"):
        raise ConfigError(f"{BACKEND_ENV_VAR} must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise ConfigError("KLDA_BACKEND=numba but numba is not importable")
    return name


def _transform_numpy(x, omega, beta, scale):
    out = x @ omega
    out += beta
    np.cos(out, out=out)
    out *= scale
    return out


if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _transform_numba(x, omega, beta, scale):  # pragma: no cover - compiled
        n, d = x.shape
        dim = omega.shape[1]
        out = np.empty((n, dim))
        nblocks = (n + _ROW_BLOCK - 1) // _ROW_BLOCK
        for blk in prange(nblocks):
            lo = blk * _ROW_BLOCK
            hi = min(n, lo + _ROW_BLOCK)
            m = hi - lo
            buf = np.empty((m, dim))
            for r in range(m):
                for j in range(dim):
                    buf[r, j] = beta[j]
            # k outermost: every (row, j) entry sums in ascending-k order,
            # independent of block size and thread schedule.
            for k in range(d):
                for r in range(m):
                    xv = x[lo + r, k]
                    for j in range(dim):
                        buf[r, j] += xv * omega[k, j]
            for r in range(m):
                for j in range(dim):
                    out[lo + r, j] = scale * np.cos(buf[r, j])
        return out


def rff_transform(x: np.ndarray, omega: np.ndarray, beta: np.ndarray, scale: float) -> np.ndarray:
    """Apply the cosine feature map scale*cos(x @ omega + beta) row-wise.

    x is (n, d), omega (d, D), beta (D,); returns float64 (n, D).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if active_backend() == "numba":
        return _transform_numba(x, omega, beta, scale)
    return _transform_numpy(x, omega, beta, scale)


def class_scatter(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column mean and centered scatter sum_i (z_i - mu)(z_i - mu)^T of one class batch.

    Two-pass (mean first, then centered products) so the result is free of
    the cancellation the uncentered z'z - n*mu*mu' form would introduce.
    Blocked so the centered temporary stays bounded for large batches.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    n, dim = z.shape
    mu = z.mean(axis=0)
    scatter = np.zeros((dim, dim))
    for lo in range(0, n, _SCATTER_BLOCK):
        zc = z[lo : lo + _SCATTER_BLOCK] - mu
        scatter += zc.T @ zc
    return mu, scatter
