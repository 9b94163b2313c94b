"""L^q_t L^r_x norms of free flows on (T, infinity).

The finite horizon (T, T_max) is integrated on geometric nodes; the
remainder is a power law fitted on the last decade and integrated in
closed form.
"""
from dataclasses import dataclass
import math
import warnings

import numpy as np

from ._parallel import pmap
from .errors import ConfigError, DivergentTailError, HorizonWarning
from .exponents import derive_exponents, scaling_index
from .grid import lattice_norm, rescale
from .propagator import default_t_min, loglog_fit, propagate

TAIL_WARN = 0.2


@dataclass(frozen=True)
class TimeGrid:
    """Geometric nodes T = t_0 < ... < t_M = T_max with 3-point interval rules in log t."""
    T: float = 1.0
    T_max: float = 1000.0
    M: int = 64

    def __post_init__(self):
        if self.M < 16:
            raise ConfigError(f"time grid needs M >= 16 intervals, got {self.M}")
        if not self.T >= 1:
            raise ConfigError(f"lower endpoint T={self.T} must be >= 1")
        if not self.T_max > self.T:
            raise ConfigError("T_max must exceed T")

    @classmethod
    def unchecked(cls, T, T_max, M=64):
        """A grid allowed to start below 1 (rescaled experiments)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "T", T)
        object.__setattr__(obj, "T_max", T_max)
        object.__setattr__(obj, "M", M)
        return obj

    @property
    def nodes(self):
        return np.geomspace(self.T, self.T_max, self.M + 1)

    @property
    def log_step(self):
        return math.log(self.T_max / self.T) / self.M

    def interval_rules(self):
        """For each interval [t_i, t_{i+1}]: (node indices, coefficients) acting on g(t) t."""
        M, h = self.M, self.log_step
        rules = []
        for i in range(M):
            if i + 2 <= M:
                rules.append(((i, i + 1, i + 2), (5 * h / 12, 8 * h / 12, -h / 12)))
            else:
                rules.append(((i - 1, i, i + 1), (-h / 12, 8 * h / 12, 5 * h / 12)))
        return rules

    @property
    def weights(self):
        """Weights w_j with sum_j w_j g(t_j) ~ int_T^T_max g dt."""
        w = np.zeros(self.M + 1)
        for idx, coef in self.interval_rules():
            for k, c in zip(idx, coef):
                w[k] += c
        return w * self.nodes

    def cumulative_from(self, values):
        """I_j ~ int_{t_j}^{T_max} g dt for samples g(t_j) stacked on axis 0."""
        values = np.asarray(values)
        t = self.nodes
        out = np.zeros_like(values, dtype=np.result_type(values, float))
        for i, (idx, coef) in reversed(list(enumerate(self.interval_rules()))):
            acc = out[i + 1].copy()
            for k, c in zip(idx, coef):
                acc += (c * t[k]) * values[k]
            out[i] = acc
        return out

    def describe(self):
        return {"T": self.T, "T_max": self.T_max, "M": self.M}


def power_tail(times, norms, q, exponent=None, window=10.0):
    """Closed-form int_{T_max}^inf (A t^-sigma)^q dt from a fit on the last ``window`` factor of times.

    With ``exponent`` given, sigma is fixed and only A is fitted.  Returns
    (tail integral of the q-th power, free-fit slope, sigma).
    """
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    sel = times >= times[-1] / window
    t, n = times[sel], norms[sel]
    if np.all(n == 0):
        return 0.0, float("nan"), exponent if exponent is not None else float("nan")
    slope, intercept, _ = loglog_fit(t, n)
    if exponent is None:
        sigma = -slope
        logA = intercept
    else:
        sigma = exponent
        logA = float(np.mean(np.log(n) + sigma * np.log(t)))
    if q * sigma <= 1:
        raise DivergentTailError(f"decay exponent {sigma:.4g} too slow for L^{q:.4g} in time (need q*sigma > 1)")
    T_max = times[-1]
    tail = math.exp(q * logA) * T_max ** (1 - q * sigma) / (q * sigma - 1)
    return float(tail), slope, sigma


@dataclass
class StNormResult:
    finite_part: float
    tail_part: float
    total: float
    tail_fraction: float
    fit_slope: float
    times: np.ndarray
    node_norms: np.ndarray

    def as_json(self):
        return {"finite_part": self.finite_part, "tail_part": self.tail_part, "total": self.total,
                "tail_fraction": self.tail_fraction, "fit_slope": self.fit_slope}


def free_norms(f, r, times, t_min=None, threads=None):
    """||exp(it Lap) f||_{L^r} at each time (Fresnel above t_min, periodic below)."""
    base = f.grid
    if t_min is None:
        t_min = default_t_min(base)

    def one(t):
        vals, frame = propagate(f.values, base, t, t_min)
        return lattice_norm(vals, frame, r)

    return np.array(pmap(one, times, threads))


def combine_norms(tg, node_norms, q, sigma):
    """Finite-horizon quadrature plus fixed-exponent power-law tail of a node-norm series."""
    w = tg.weights
    finite_q = float(np.sum(w * node_norms ** q))
    tail_q, slope, _ = power_tail(tg.nodes, node_norms, q, exponent=sigma)
    total_q = finite_q + tail_q
    frac = tail_q / total_q if total_q > 0 else 0.0
    return finite_q, tail_q, total_q, frac, slope


def spacetime_norm(f, q, r, tg, t_min=None, threads=None):
    """||exp(it Lap) f||_{L^q_t L^r_x((T, inf))}: quadrature to T_max plus power-law tail."""
    d = f.grid.d
    if not 1 < q < math.inf:
        raise ConfigError(f"time exponent q={q} must lie in (1, inf)")
    if not r >= 2:
        raise ConfigError(f"space exponent r={r} must be >= 2")
    sigma = d / 2 - d / r
    if q * sigma <= 1:
        raise DivergentTailError(
            f"q(d/2 - d/r) = {q * sigma:.6g} <= 1: the free-flow tail diverges (eps0 <= 0)")
    times = tg.nodes
    norms = free_norms(f, r, times, t_min, threads)
    if not np.any(norms > 0):
        return StNormResult(0.0, 0.0, 0.0, 0.0, float("nan"), times, norms)
    finite_q, tail_q, total_q, frac, slope = combine_norms(tg, norms, q, sigma)
    if frac > TAIL_WARN:
        warnings.warn(f"tail is {frac:.1%} of the q-th power total; extend T_max", HorizonWarning, stacklevel=2)
    return StNormResult(finite_q ** (1 / q), tail_q ** (1 / q), total_q ** (1 / q), frac, slope, times, norms)


def critical_pair(d, p):
    es = derive_exponents(d, p)
    return es.q, es.r


def norm_scaling_check(f, lam, p, tg, q=None, r=None, t_min=None, threads=None):
    """Norm of the lam-rescaled flow on (T/lam^2, inf) over the original on (T, inf).

    For the critical pair the ratio is 1; in general it is lam^(s(q,r) - s_c).
    """
    d = f.grid.d
    if q is None or r is None:
        q, r = critical_pair(d, p)
    base = spacetime_norm(f, q, r, tg, t_min, threads).total
    if lam == 1:
        return 1.0
    g = rescale(f, lam, p)
    tg2 = TimeGrid.unchecked(tg.T / lam ** 2, tg.T_max / lam ** 2, tg.M)
    scaled = spacetime_norm(g, q, r, tg2, t_min, threads).total
    return scaled / base


def expected_scaling_ratio(d, p, q, r, lam):
    s_c = d / 2 - 2 / p
    return lam ** (scaling_index(d, q, r) - s_c)
