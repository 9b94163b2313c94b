"""Numba vs pure-numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Both implementations are called directly, so one process covers both paths.
The end-to-end row runs the linear-tail recombination at acceptance size in
two subprocesses, one with RANDWAVE_DISABLE_NUMBA=1.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from randwave import _accel


def best_of(fn, repeat):
    fn()  # warm-up (includes JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rs):
    u1 = rs.standard_normal(2 ** 20) + 1j * rs.standard_normal(2 ** 20)
    u3 = (rs.standard_normal((64,) * 3) + 1j * rs.standard_normal((64,) * 3))
    V = rs.standard_normal((15, 65, 1024)) + 1j * rs.standard_normal((15, 65, 1024))
    G = rs.standard_normal((100, 15))
    return [
        ("nonlinearity 2^20", lambda m: m.nonlinearity(u1, 3.0)),
        ("nonlinearity 64^3", lambda m: m.nonlinearity(u3, 1.2)),
        ("abs_pow_sum 2^20", lambda m: m.abs_pow_sum(u1, 5.0)),
        ("nonlinear_phase 2^20", lambda m: m.nonlinear_phase(u1, 0.01, 3.0)),
        ("recombine 100x15x65x1024", lambda m: m.recombine(V, G, 5.0)),
    ]


class _Path:
    """Uniform call surface over one backend's kernels."""

    def __init__(self, prefix):
        self.prefix = prefix

    def nonlinearity(self, u, p):
        return getattr(_accel, f"_{self.prefix}_nonlinearity")(u, p)

    def abs_pow_sum(self, u, r):
        if self.prefix == "nb":
            return _accel._nb_abs_pow_sum_flat(u.reshape(-1), r, _accel.BLOCK)
        return _accel._np_abs_pow_sum(u, r)

    def nonlinear_phase(self, u, c, p):
        return getattr(_accel, f"_{self.prefix}_nonlinear_phase")(u, c, p)

    def recombine(self, V, G, r):
        return getattr(_accel, f"_{self.prefix}_recombine")(V, G, r)


END_TO_END = """
import math, time
from randwave.grid import Grid, sample_profile
from randwave.randomizer import Ensemble, build_partition
from randwave.exponents import derive_exponents
from randwave.montecarlo import linear_tail_experiment
g = Grid(1, 1024, 40.0)
u = sample_profile(g, "gaussian", amplitude=(2 / math.pi) ** 0.25)
t0 = time.perf_counter()
linear_tail_experiment(u, build_partition(g), Ensemble("gaussian", 0), derive_exponents(1, 3.0), trials=500)
print(time.perf_counter() - t0)
"""


def end_to_end():
    out = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, RANDWAVE_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        out[label] = float(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args(argv)
    if _accel.numba is None:
        sys.exit("numba is unavailable (or disabled); nothing to compare")
    rs = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, call in cases(rs):
        t_np = best_of(lambda: call(_Path("np")), args.repeat)
        t_nb = best_of(lambda: call(_Path("nb")), args.repeat)
        print(f"{name:<28}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x")
    if not args.skip_end_to_end:
        e2e = end_to_end()
        print(f"{'linear-tail (500 trials)':<28}{e2e['numpy']:>12.2f}{e2e['numba']:>12.2f}"
              f"{e2e['numpy'] / e2e['numba']:>9.1f}x")


if __name__ == "__main__":
    main()
