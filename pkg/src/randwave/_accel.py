"""Hot numeric kernels, compiled with numba when available.

Set ``RANDWAVE_DISABLE_NUMBA=1`` to force the pure-numpy path.  Both paths
return the same values up to floating point rounding; each path is
bit-reproducible on its own, independent of the thread count, because
every reduction runs over fixed-size blocks in a fixed order.
"""
import os

import numpy as np

BLOCK = 4096

_disabled = os.environ.get("RANDWAVE_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

# TBB in this ecosystem is often too old for numba; OpenMP is safe for concurrent callers.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

try:
    if _disabled:
        raise ImportError("numba disabled by RANDWAVE_DISABLE_NUMBA")
    import numba
    from numba import njit, prange

    BACKEND = "numba"
except ImportError:
    numba = None
    BACKEND = "numpy"


def set_threads(n):
    """Set worker threads for compiled kernels; returns the count in effect."""
    if numba is None:
        return 1
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


# ---------------------------------------------------------------- numpy path

def _np_nonlinearity(u, p):
    return np.abs(u) ** p * u


def _np_abs_pow_sum(u, r):
    flat = np.ascontiguousarray(u).reshape(-1)
    nblk = -(-flat.size // BLOCK)
    parts = np.empty(nblk)
    for b in range(nblk):
        seg = flat[b * BLOCK:(b + 1) * BLOCK]
        parts[b] = np.sum((seg.real ** 2 + seg.imag ** 2) ** (0.5 * r))
    return float(np.sum(parts))


def _np_recombine(V, G, r):
    # V: (K, J, n) complex, G: (S, K) real -> (S, J) of sum_x |sum_k g V|^r
    K, J, n = V.shape
    S = G.shape[0]
    out = np.empty((S, J))
    chunk = max(1, 2_000_000 // max(1, J * n))
    for s0 in range(0, S, chunk):
        g = G[s0:s0 + chunk]
        acc = np.zeros((g.shape[0], J, n), dtype=np.complex128)
        for k in range(K):
            acc += g[:, k, None, None] * V[k][None]
        out[s0:s0 + chunk] = np.sum((acc.real ** 2 + acc.imag ** 2) ** (0.5 * r), axis=2)
    return out


def _np_nonlinear_phase(u, coeff, p):
    return u * np.exp(-1j * coeff * np.abs(u) ** p)


# ---------------------------------------------------------------- numba path

if numba is not None:

    @njit(parallel=True, cache=True)
    def _nb_nonlinearity(u, p):
        flat = u.reshape(-1)
        out = np.empty_like(flat)
        half = 0.5 * p
        for i in prange(flat.size):
            z = flat[i]
            m = (z.real * z.real + z.imag * z.imag) ** half
            out[i] = m * z
        return out.reshape(u.shape)

    @njit(parallel=True, cache=True)
    def _nb_abs_pow_sum_flat(flat, r, block):
        n = flat.size
        nblk = (n + block - 1) // block
        parts = np.empty(nblk)
        half = 0.5 * r
        for b in prange(nblk):
            s = 0.0
            stop = min(n, (b + 1) * block)
            for i in range(b * block, stop):
                z = flat[i]
                s += (z.real * z.real + z.imag * z.imag) ** half
            parts[b] = s
        total = 0.0
        for b in range(nblk):
            total += parts[b]
        return total

    @njit(parallel=True, cache=True)
    def _nb_recombine(V, G, r):
        K, J, n = V.shape
        S = G.shape[0]
        out = np.empty((S, J))
        half = 0.5 * r
        for s in prange(S):
            for j in range(J):
                acc = 0.0
                for i in range(n):
                    re = 0.0
                    im = 0.0
                    for k in range(K):
                        z = V[k, j, i]
                        g = G[s, k]
                        re += g * z.real
                        im += g * z.imag
                    acc += (re * re + im * im) ** half
                out[s, j] = acc
        return out

    @njit(parallel=True, cache=True)
    def _nb_nonlinear_phase(u, coeff, p):
        flat = u.reshape(-1)
        out = np.empty_like(flat)
        half = 0.5 * p
        for i in prange(flat.size):
            z = flat[i]
            m = (z.real * z.real + z.imag * z.imag) ** half
            ph = -coeff * m
            out[i] = z * complex(np.cos(ph), np.sin(ph))
        return out.reshape(u.shape)


# ---------------------------------------------------------------- dispatch

def nonlinearity(u, p):
    """|u|^p u, pointwise."""
    u = np.ascontiguousarray(u, dtype=np.complex128)
    if BACKEND == "numba":
        return _nb_nonlinearity(u, float(p))
    return _np_nonlinearity(u, p)


def abs_pow_sum(u, r):
    """Sum of |u|^r over all samples (finite r)."""
    u = np.ascontiguousarray(u, dtype=np.complex128)
    if BACKEND == "numba":
        return float(_nb_abs_pow_sum_flat(u.reshape(-1), float(r), BLOCK))
    return _np_abs_pow_sum(u, r)


def recombine(V, G, r):
    """Per-draw, per-node sums of |sum_k G[s,k] V[k,j]|^r.

    ``V`` holds precomputed linear flows of the localized pieces, shape
    (K, J, n); ``G`` the coefficient draws, shape (S, K).
    """
    V = np.ascontiguousarray(V, dtype=np.complex128)
    G = np.ascontiguousarray(G, dtype=np.float64)
    if BACKEND == "numba":
        return _nb_recombine(V, G, float(r))
    return _np_recombine(V, G, r)


def nonlinear_phase(u, coeff, p):
    """u * exp(-i coeff |u|^p): exact flow of the pointwise nonlinearity."""
    u = np.ascontiguousarray(u, dtype=np.complex128)
    if BACKEND == "numba":
        return _nb_nonlinear_phase(u, float(coeff), float(p))
    return _np_nonlinear_phase(u, coeff, p)
