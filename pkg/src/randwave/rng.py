"""Counter-based keyed random numbers.

A draw is a pure function of (master seed, purpose, trial, lattice key,
stream): the SplitMix64 finalizer is applied to a running hash of those
integers.  No generator state exists, so draws can be produced in any order,
in any batch shape, on any number of threads, and always agree bit for bit.
"""
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))


def mix64(z):
    """SplitMix64 output function (a bijection on 64-bit words)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _absorb(h, v):
    with np.errstate(over="ignore"):
        return mix64(h ^ (np.asarray(v, dtype=np.uint64) + _GOLDEN))


def _zigzag(k):
    k = np.asarray(k, dtype=np.int64)
    return ((k << 1) ^ (k >> 63)).astype(np.uint64)


def lattice_ids(keys):
    """Stable 64-bit identifiers for integer lattice points (rows of ``keys``)."""
    keys = np.atleast_2d(np.asarray(keys, dtype=np.int64))
    h = np.full(keys.shape[0], 0x243F6A8885A308D3, dtype=np.uint64)
    for i in range(keys.shape[1]):
        h = _absorb(h, _zigzag(keys[:, i]) + np.uint64(i))
    return h


def keyed_uniform(master, purpose, trials, ids, stream=0):
    """Uniforms in (0, 1), shape (len(trials), len(ids))."""
    trials = np.atleast_1d(np.asarray(trials, dtype=np.uint64))
    ids = np.atleast_1d(np.asarray(ids, dtype=np.uint64))
    h = _absorb(np.uint64(master & 0xFFFFFFFFFFFFFFFF), np.uint64(purpose))
    h = _absorb(h, trials)[:, None]
    h = _absorb(h, ids[None, :])
    h = _absorb(h, np.uint64(stream))
    return ((h >> _S11).astype(np.float64) + 0.5) * 2.0 ** -53


def keyed_normal(master, purpose, trials, ids):
    """Standard normals by Box-Muller on two keyed uniform streams."""
    u1 = keyed_uniform(master, purpose, trials, ids, 0)
    u2 = keyed_uniform(master, purpose, trials, ids, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
