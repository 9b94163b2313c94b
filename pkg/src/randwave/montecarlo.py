"""Ensemble experiments for the probabilistic estimates.

All draws are keyed (see :mod:`randwave.rng`), so a report is a pure function
of its inputs and master seed.  The PDE-norm experiment never transforms a
randomized field: the flows of the localized pieces ``exp(it Lap)(psi_k u)``
are computed once per time node and every trial recombines them with its own
coefficients.
"""
from dataclasses import asdict, dataclass, field
import io
import math

import numpy as np
from statsmodels.api import WLS, add_constant
from statsmodels.stats.proportion import proportion_confint

from . import _accel
from ._parallel import pmap
from .errors import ConfigError, DivergentTailError, GridMisconfiguredError, InvalidExponentError
from .grid import centered_dft, mass
from .propagator import default_t_min, frame_of, propagate
from .randomizer import coefficient_matrix
from .spacetime import TimeGrid

PURPOSE_MOMENTS = 2
PURPOSE_SCALAR = 3
PURPOSE_LINEAR = 4
PURPOSE_PILOT = 5
PURPOSE_FLR = 6
PURPOSE_FLR_PILOT = 7

FIT_MIN_FAILURES = 5
SCALAR_FIT_MIN_FAILURES = 20
PIECE_REL_TOL = 1e-16
DEFAULT_QUANTILES = (0.5, 0.75, 0.9, 0.95)


def wilson(failures, trials):
    """Wilson 95% interval for a binomial proportion."""
    lo, hi = proportion_confint(failures, trials, alpha=0.05, method="wilson")
    return float(lo), float(hi)


@dataclass
class TailReport:
    """Empirical exceedance probabilities over a grid of thresholds (and times)."""
    kind: str
    axis: str
    cells: list
    fits: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def select(self, value=None, T=None):
        return [c for c in self.cells
                if (value is None or c[self.axis] == value) and (T is None or c["T"] == T)]

    def probabilities(self, T=None):
        return np.array([c["p_hat"] for c in self.select(T=T)])

    def to_json(self):
        return asdict(self)

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"{self.axis},T,trials,failures,p_hat,lo95,hi95\n")
        for c in self.cells:
            T = "" if c["T"] is None else repr(c["T"])
            buf.write(f"{c[self.axis]!r},{T},{c['trials']},{c['failures']},"
                      f"{c['p_hat']!r},{c['lo95']!r},{c['hi95']!r}\n")
        return buf.getvalue()


def _cell(axis, value, T, failures, trials):
    lo, hi = wilson(failures, trials)
    return {axis: float(value), "T": None if T is None else float(T), "trials": int(trials),
            "failures": int(failures), "p_hat": failures / trials, "lo95": lo, "hi95": hi}


def tail_fit(x, cells, min_failures=FIT_MIN_FAILURES):
    """Weighted regression of log p_hat on ``x`` over cells with enough failures.

    Weights are inverse widths of the Wilson intervals on the log scale.
    Returns None with fewer than two usable cells.
    """
    x = np.asarray(x, dtype=float)
    use = np.array([c["failures"] >= min_failures for c in cells])
    if use.sum() < 2:
        return None
    sel = [c for c, u in zip(cells, use) if u]
    y = np.log([c["p_hat"] for c in sel])
    width = np.log([c["hi95"] for c in sel]) - np.log([c["lo95"] for c in sel])
    xs = x[use]
    if np.ptp(xs) == 0:
        return None
    res = WLS(y, add_constant(xs, has_constant="add"), weights=1.0 / width).fit()
    intercept, slope = (float(v) for v in res.params)
    # constant log p (e.g. every used cell at p = 1) leaves R^2 undefined
    r2 = float(res.rsquared) if np.ptp(y) > 0 else math.nan
    return {"slope": slope, "intercept": intercept, "r2": r2, "cells": int(use.sum())}


# ---------------------------------------------------------------- scalar sums

def _random_sums(ensemble, c, trials, purpose):
    """S = sum_k c_k g_k for each trial, summed in fixed k order."""
    c = np.asarray(c, dtype=float)
    ids = np.arange(len(c), dtype=np.uint64)
    S = np.zeros(trials)
    chunk = max(1, 4_000_000 // max(1, len(c)))
    for t0 in range(0, trials, chunk):
        g = ensemble.draw(np.arange(t0, min(trials, t0 + chunk)), ids, purpose)
        acc = np.zeros(g.shape[0])
        for k in range(len(c)):
            acc += c[k] * g[:, k]
        S[t0:t0 + g.shape[0]] = acc
    return S


def moment_check(ensemble, c, alphas=(2, 4, 6), trials=100_000):
    """Per alpha, ||sum c_k g_k||_{L^alpha(omega)} / (sqrt(alpha) ||c||_2)."""
    c = np.asarray(c, dtype=float)
    norm_c = math.sqrt(float(np.sum(c * c)))
    if norm_c == 0:
        raise ConfigError("coefficient vector must be nonzero")
    for a in alphas:
        if not 2 <= a <= 12:
            raise InvalidExponentError(f"moment order {a} outside [2, 12]")
    S = np.abs(_random_sums(ensemble, c, trials, PURPOSE_MOMENTS))
    return {float(a): float(np.mean(S ** a) ** (1 / a) / (math.sqrt(a) * norm_c)) for a in alphas}


def gaussian_moment_ratio(alpha):
    """Exact ||Z||_{L^alpha} / sqrt(alpha) for a standard normal Z."""
    m = 2 ** (alpha / 2) * math.gamma((alpha + 1) / 2) / math.sqrt(math.pi)
    return m ** (1 / alpha) / math.sqrt(alpha)


def scalar_tail_check(ensemble, c, eta_grid, trials=100_000):
    """Empirical P(|sum c_k g_k| > eta) per eta, with a fit of log P against eta^2."""
    S = np.abs(_random_sums(ensemble, c, trials, PURPOSE_SCALAR))
    cells = [_cell("eta", eta, None, int(np.count_nonzero(S > eta)), trials) for eta in eta_grid]
    if all(c_["failures"] == 0 for c_ in cells):
        raise GridMisconfiguredError("no exceedances in any cell; lower the thresholds")
    fit = tail_fit(np.asarray(eta_grid, dtype=float) ** 2, cells, SCALAR_FIT_MIN_FAILURES)
    return TailReport("scalar-tail", "eta", cells, {"eta2": fit},
                      config={"ensemble": ensemble.describe(), "trials": int(trials),
                              "coefficients": np.asarray(c, dtype=float).tolist()})


# ---------------------------------------------------------------- PDE-norm tails

@dataclass
class PieceFlows:
    """Free flows of the localized pieces at the nodes of one time grid."""
    tg: TimeGrid
    indices: np.ndarray
    V: np.ndarray
    cells: np.ndarray

    def node_norms(self, G, r):
        """||sum_k G[s,k] V[k,j]||_{L^r} for every draw s and node j; shape (S, J)."""
        sums = _accel.recombine(self.V, G, r)
        return (sums * self.cells[None]) ** (1 / r)

    def square_function_norms(self, r):
        sq = np.sqrt(np.sum(np.abs(self.V) ** 2, axis=0))
        return np.array([(_accel.abs_pow_sum(sq[j], r) * self.cells[j]) ** (1 / r) for j in range(sq.shape[0])])


def piece_flows(indices, pieces, base, tg, t_min=None, threads=None):
    if t_min is None:
        t_min = default_t_min(base)
    times = tg.nodes
    V = np.empty((len(pieces), len(times), base.N ** base.d), dtype=np.complex128)

    def one(j):
        for k, piece in enumerate(pieces):
            vals, _ = propagate(piece, base, times[j], t_min)
            V[k, j] = vals.reshape(-1)

    pmap(one, range(len(times)), threads)
    cells = np.array([frame_of(base, t, t_min).cell for t in times])
    return PieceFlows(tg, np.asarray(indices), V, cells)


def fixed_sigma_totals(tg, norms, q, sigma, window=10.0):
    """Row-wise L^q_t norms on (T, inf) with a fixed-exponent power-law tail past T_max."""
    if q * sigma <= 1:
        raise DivergentTailError(f"q * sigma = {q * sigma:.6g} <= 1: tail diverges")
    t = tg.nodes
    finite = np.sum(tg.weights[None] * norms ** q, axis=1)
    sel = t >= t[-1] / window
    with np.errstate(divide="ignore"):
        logA = np.mean(np.log(norms[:, sel]) + sigma * np.log(t[sel])[None], axis=1)
    tail = np.where(np.isfinite(logA), np.exp(q * logA) * t[-1] ** (1 - q * sigma) / (q * sigma - 1), 0.0)
    return (finite + tail) ** (1 / q), tail / np.where(finite + tail > 0, finite + tail, 1.0)


def _unit_mass(u_plus):
    m = mass(u_plus)
    if abs(m - 1) > 1e-8:
        raise ConfigError(f"final state must have unit L^2 norm (mass {m:.6g})")


def _trial_norms(flows, ensemble, pou, trials, purpose, es):
    G = coefficient_matrix(ensemble, pou, np.arange(trials), purpose, columns=flows.indices)
    norms = flows.node_norms(G, es.r)
    sigma = es.d / 2 - es.d / es.r
    totals, tail_frac = fixed_sigma_totals(flows.tg, norms, es.q, sigma)
    return totals, tail_frac


def linear_tail_experiment(u_plus, pou, ensemble, exps, eta_grid=None, T_grid=(1.0, 4.0, 16.0), trials=500,
                           horizon=1000.0, M=64, quantiles=DEFAULT_QUANTILES, pilot_trials=None,
                           t_min=None, threads=None, min_trials=500):
    """Exceedance surface P(||exp(it Lap) u^omega||_{L^q L^r((T, inf))} >= eta) over eta and T.

    The thresholds default to pilot-run quantiles at the first T.  Each T uses
    its own keyed draws; cells at the same T share them.  ``horizon`` sets
    T_max = horizon * T.
    """
    if trials < min_trials:
        raise ConfigError(f"need at least {min_trials} trials per cell, got {trials}")
    _unit_mass(u_plus)
    es = exps
    sigma = es.d / 2 - es.d / es.r
    if es.q * sigma <= 1:
        raise DivergentTailError(f"eps0 = {es.eps0:.4g} <= 0: the free-flow tail diverges")
    base = u_plus.grid
    indices, pieces = pou.pieces(u_plus, PIECE_REL_TOL)
    T_grid = [float(T) for T in T_grid]
    pilot_trials = trials if pilot_trials is None else pilot_trials

    flows = {}
    for T in T_grid:
        flows[T] = piece_flows(indices, pieces, base, TimeGrid(T, horizon * T, M), t_min, threads)

    pilot, _ = _trial_norms(flows[T_grid[0]], ensemble, pou, pilot_trials, PURPOSE_PILOT, es)
    pilot_q = {str(q): float(np.quantile(pilot, q)) for q in quantiles}
    median = float(np.quantile(pilot, 0.5))
    if eta_grid is None:
        eta_grid = [pilot_q[str(q)] for q in quantiles]
    eta_grid = sorted(float(e) for e in eta_grid)
    if median not in eta_grid:
        eta_grid = sorted(eta_grid + [median])

    cells, diag = [], {"pilot_quantiles": pilot_q, "pilot_median": median, "pieces": int(len(indices))}
    per_T = {}
    for n, T in enumerate(T_grid):
        totals, tail_frac = _trial_norms(flows[T], ensemble, pou, trials, PURPOSE_LINEAR * 1000 + n, es)
        per_T[T] = totals
        for eta in eta_grid:
            cells.append(_cell("eta", eta, T, int(np.count_nonzero(totals >= eta)), trials))
        sf = flows[T].square_function_norms(es.r)
        sf_total, _ = fixed_sigma_totals(flows[T].tg, sf[None], es.q, sigma)
        diag[f"T={T:g}"] = {"median_norm": float(np.median(totals)), "mean_norm": float(np.mean(totals)),
                            "std_norm": float(np.std(totals)), "max_tail_fraction": float(np.max(tail_frac)),
                            "square_function_norm": float(sf_total[0]),
                            "median_over_square_function": float(np.median(totals) / sf_total[0])}

    T0 = T_grid[0]
    at_T0 = [c for c in cells if c["T"] == T0]
    fits = {"eta2_at_T%g" % T0: tail_fit([c["eta"] ** 2 for c in at_T0], at_T0)}
    at_med = [c for c in cells if c["eta"] == median]
    fits["T2eps0_at_median"] = tail_fit([c["T"] ** (2 * es.eps0) for c in at_med], at_med)
    config = {"ensemble": ensemble.describe(), "trials": int(trials), "pilot_trials": int(pilot_trials),
              "T_grid": T_grid, "horizon": float(horizon), "M": int(M), "quantiles": list(quantiles),
              "exponents": es.as_dict(), "grid": {"d": base.d, "N": base.N, "L": base.L}}
    return TailReport("linear-tail", "eta", cells, fits, diag, config)


def flr_tail_experiment(u_plus, pou, ensemble, rho, M_grid=None, trials=1000, quantiles=DEFAULT_QUANTILES,
                        pilot_trials=None, min_trials=1000):
    """Exceedance P(||(u^omega)^||_{L^rho} >= M) per threshold M, with a fit of log P against M^2."""
    if not 2 < rho < math.inf:
        raise InvalidExponentError(f"Fourier-Lebesgue exponent must lie in (2, inf), got {rho}")
    if trials < min_trials:
        raise ConfigError(f"need at least {min_trials} trials per cell, got {trials}")
    base = u_plus.grid
    indices, pieces = pou.pieces(u_plus, PIECE_REL_TOL)
    dual = base.dual()
    V = np.stack([centered_dft(p_, base).reshape(1, -1) for p_ in pieces])
    flows = PieceFlows(None, indices, V, np.array([dual.cell]))
    pilot_trials = trials if pilot_trials is None else pilot_trials

    def norms(n, purpose):
        G = coefficient_matrix(ensemble, pou, np.arange(n), purpose, columns=indices)
        return flows.node_norms(G, rho)[:, 0]

    pilot = norms(pilot_trials, PURPOSE_FLR_PILOT)
    pilot_q = {str(q): float(np.quantile(pilot, q)) for q in quantiles}
    if M_grid is None:
        M_grid = [pilot_q[str(q)] for q in quantiles]
    M_grid = sorted(float(m) for m in M_grid)
    vals = norms(trials, PURPOSE_FLR)
    cells = [_cell("M", m, None, int(np.count_nonzero(vals >= m)), trials) for m in M_grid]
    fit = tail_fit(np.array(M_grid) ** 2, cells)
    diag = {"pilot_quantiles": pilot_q, "median_norm": float(np.median(vals)),
            "min_norm": float(np.min(vals)), "max_norm": float(np.max(vals)), "pieces": int(len(indices))}
    config = {"ensemble": ensemble.describe(), "rho": float(rho), "trials": int(trials),
              "pilot_trials": int(pilot_trials), "quantiles": list(quantiles),
              "grid": {"d": base.d, "N": base.N, "L": base.L}}
    return TailReport("flr-tail", "M", cells, {"M2": fit}, diag, config)


def step_location(report):
    """For a deterministic ensemble: the interval of thresholds where P jumps from 1 to 0."""
    below = [c[report.axis] for c in report.cells if c["failures"] == c["trials"]]
    above = [c[report.axis] for c in report.cells if c["failures"] == 0]
    return (max(below) if below else None), (min(above) if above else None)
