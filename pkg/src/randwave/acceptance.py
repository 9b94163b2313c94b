"""Acceptance suite: closed-form oracles and regression checks at desk scale.

Each criterion returns ``{"name", "passed", "metrics"}`` with deterministic
content only (no timings), so reports can be compared byte for byte.
"""
from fractions import Fraction
import json
import math
import time
import warnings

import numpy as np
from scipy import integrate
from scipy.special import erfc

from . import _accel, _parallel, rng
from .calibration import check_table, load_table
from .errors import AccuracyWarning, ConfigError, HorizonWarning
from .exponents import derive_exponents, strauss_exponent, validate_exponents
from .grid import Grid, fourier, lp_norm, mass, sample_profile
from .montecarlo import (flr_tail_experiment, gaussian_moment_ratio, linear_tail_experiment, moment_check,
                         scalar_tail_check, step_location)
from .propagator import dispersive_decay_fit, evolve_fresnel, mass_drift
from .randomizer import Ensemble, build_partition, coefficient_matrix, l2_split_ratio
from .spacetime import TimeGrid, expected_scaling_ratio, norm_scaling_check, spacetime_norm
from .waveop import SolverConfig, crossvalidate, inverse_pseudoconformal, picard_solve, pseudoconformal

PURPOSE_SAMPLES = 11
PURPOSE_SPLIT = 12

D1 = {"d": 1, "N": 1024, "L": 40.0}
D2 = {"d": 2, "N": 256, "L": 20.0}
D3 = {"d": 3, "N": 64, "L": 10.0}


def _grid(gs):
    return Grid(gs["d"], gs["N"], gs["L"])


def _unit_gaussian(grid):
    """Gaussian e^{-|x|^2} rescaled to unit L^2 norm."""
    return sample_profile(grid, "gaussian", amplitude=(2 / math.pi) ** (grid.d / 4))


def _result(name, passed, **metrics):
    return {"name": name, "passed": bool(passed), "metrics": metrics}


# ---------------------------------------------------------------- 1

EXPECTED = {
    (1, 3.0): {"r": Fraction(5), "q": Fraction(30, 7), "qbar": Fraction(15), "s_c": Fraction(-1, 6),
               "eps0": Fraction(1, 15), "rho0": Fraction(3), "a": Fraction(20, 3), "b": Fraction(5),
               "alpha": Fraction(20, 17), "beta": Fraction(5, 4)},
    (3, 1.2): {"r": Fraction(16, 5), "q": Fraction(96, 35), "qbar": Fraction(96, 19), "s_c": Fraction(-1, 6),
               "eps0": Fraction(19, 96), "rho0": Fraction(9, 4)},
}


def crit_exponents(seed):
    u = rng.keyed_uniform(seed, PURPOSE_SAMPLES, np.arange(1000), [0, 1])
    worst, failures = 0.0, 0
    for ud, up in u:
        d = 1 + int(ud * 3)
        p0, p1 = strauss_exponent(d), 4 / d
        p = p0 + (p1 - p0) * (0.001 + 0.998 * up)
        rep = validate_exponents(derive_exponents(d, p))
        worst = max(worst, rep.max_residual)
        failures += not rep.passed
    table_err = 0.0
    for (d, p), exp in EXPECTED.items():
        es = derive_exponents(d, p)
        for k, v in exp.items():
            table_err = max(table_err, abs(getattr(es, k) - float(v)))
    p0_3 = strauss_exponent(3)
    ok = failures == 0 and worst <= 1e-12 and p0_3 == 1.0 and table_err <= 1e-12
    return _result("exponents", ok, samples=1000, failures=failures, max_residual=worst,
                   p0_3=p0_3, table_max_error=table_err)


# ---------------------------------------------------------------- 2

def crit_dispersive(seed):
    times = np.geomspace(10, 1000, 16)
    out, ok = {}, True
    for gs in (D1, D2):
        f = sample_profile(_grid(gs), "gaussian")
        fit = dispersive_decay_fit(f, math.inf, times)
        rel = abs(fit.slope + gs["d"] / 2) / (gs["d"] / 2)
        drift = max(mass_drift(f, t, "fresnel") for t in (10.0, 100.0, 1000.0))
        out[f"d{gs['d']}"] = {"slope": fit.slope, "slope_rel_error": rel, "mass_drift": drift}
        ok &= rel <= 0.02 and drift <= 1e-12
    return _result("dispersive", ok, **out)


# ---------------------------------------------------------------- 3

def crit_stnorm(seed):
    d, p = 1, 3.0
    es = derive_exponents(d, p)
    f = sample_profile(_grid(D1), "gaussian")
    res = spacetime_norm(f, es.q, es.r, TimeGrid(1.0, 1000.0, 64))
    integrand = lambda t: ((math.pi / 5) ** 0.1 * (1 + 16 * t * t) ** -0.15) ** es.q
    val, _ = integrate.quad(integrand, 1, math.inf, limit=200)
    oracle = val ** (1 / es.q)
    rel = abs(res.total - oracle) / oracle
    # lam = 2 starts the rescaled grid at T/4, so T = 4 keeps every node >= 1
    ratios = {"0.5": norm_scaling_check(f, 0.5, p, TimeGrid(1.0, 1000.0, 64)),
              "2": norm_scaling_check(f, 2.0, p, TimeGrid(4.0, 4000.0, 64))}
    worst = max(abs(r - 1) for r in ratios.values())
    mism = norm_scaling_check(f, 2.0, p, TimeGrid(4.0, 4000.0, 64), q=6.0, r=4.0)
    mism_expected = expected_scaling_ratio(d, p, 6.0, 4.0, 2.0)
    ok = rel <= 0.005 and worst <= 0.01
    return _result("stnorm", ok, total=res.total, oracle=oracle, rel_error=rel, tail_fraction=res.tail_fraction,
                   scaling_ratios=ratios, mismatched_ratio=mism, mismatched_expected=mism_expected)


# ---------------------------------------------------------------- 4

TEST_FAMILY = (("gaussian", {}), ("gaussian", {"width": 2.0, "center": 1.5}), ("bump", {"scale": 2.0}),
               ("modulated_gaussian", {"momentum": 3.0}), ("smoothed_indicator", {"radius": 3.0, "edge": 0.5}))


def _interior(grid, margin=2.0):
    mask = np.ones(grid.shape, dtype=bool)
    for x in grid.coords():
        mask = mask & (np.abs(x) < grid.L - margin)
    return mask


def crit_partition(seed):
    ok = True
    pou_err = {}
    pous = {}
    for gs in (D1, {"d": 2, "N": 128, "L": 10.0}, {"d": 3, "N": 32, "L": 6.0}):
        g = _grid(gs)
        pou = build_partition(g)
        pous[gs["d"]] = pou
        err = float(np.max(np.abs(pou.total()[_interior(g)] - 1)))
        pou_err[f"d{gs['d']}"] = err
        ok &= err <= 1e-12
    ratios = {}
    for d in (1, 2):
        pou = pous[d]
        for kind, params in TEST_FAMILY:
            f = sample_profile(pou.grid, kind, **params)
            for w in (0.0, 0.5):
                _, ratio = l2_split_ratio(f, pou, w)
                ratios[f"d{d}:{kind}:{sorted(params.items())}:w={w}"] = ratio
                ok &= 5.0 ** -d <= ratio <= 1 + 1e-12
    # E ||f^omega||^2 against sum_k ||psi_k f||^2
    pou = pous[1]
    f = sample_profile(pou.grid, "gaussian")
    split, _ = l2_split_ratio(f, pou)
    ens = Ensemble("gaussian", seed)
    trials = 10_000
    dens = np.abs(f.values) ** 2 * pou.grid.cell
    samples = np.empty(trials)
    for t0 in range(0, trials, 1000):
        G = coefficient_matrix(ens, pou, np.arange(t0, t0 + 1000), PURPOSE_SPLIT)
        W = pou.combine(G)
        samples[t0:t0 + 1000] = np.sum(dens[None] * W ** 2, axis=1)
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(trials))
    z = abs(mean - split) / se
    ok &= z <= 3
    return _result("partition", ok, partition_error=pou_err, split_ratios=ratios, mc_mean=mean,
                   split_sum=split, standard_error=se, z_score=z)


# ---------------------------------------------------------------- 5

def crit_large_deviation(seed):
    ens = Ensemble("gaussian", seed)
    c = 1.0 / np.arange(1, 17)
    c = c / np.linalg.norm(c)
    got = moment_check(ens, c, (2, 4, 6), 100_000)
    rel = {str(int(a)): abs(v - gaussian_moment_ratio(a)) / gaussian_moment_ratio(a) for a, v in got.items()}
    rep = scalar_tail_check(ens, c, [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0], 100_000)
    cell = rep.select(value=2.0)[0]
    truth = float(erfc(math.sqrt(2)))
    covered = cell["lo95"] <= truth <= cell["hi95"]
    ok = max(rel.values()) <= 0.02 and covered
    return _result("large-deviation", ok, moment_ratios={str(int(a)): v for a, v in got.items()},
                   moment_rel_error=rel, tail_cell=cell, erfc_sqrt2=truth, scalar_fit=rep.fits["eta2"])


# ---------------------------------------------------------------- 6

def crit_linear_tail(seed):
    g = _grid(D1)
    u = _unit_gaussian(g)
    rep = linear_tail_experiment(u, build_partition(g), Ensemble("gaussian", seed), derive_exponents(1, 3.0),
                                 T_grid=(1.0, 4.0, 16.0), trials=500)
    fit = rep.fits["eta2_at_T1"]
    med = rep.diagnostics["pilot_median"]
    cells = [rep.select(value=med, T=T)[0] for T in (1.0, 4.0, 16.0)]
    probs = [c["p_hat"] for c in cells]
    decreasing = all(a > b for a, b in zip(probs, probs[1:]))
    disjoint = cells[2]["hi95"] < cells[0]["lo95"]
    ok = fit is not None and fit["slope"] < 0 and fit["r2"] >= 0.9 and decreasing and disjoint
    return _result("linear-tail", ok, eta2_fit=fit, T_fit=rep.fits["T2eps0_at_median"], median_eta=med,
                   p_at_median=probs, wilson_T1=[cells[0]["lo95"], cells[0]["hi95"]],
                   wilson_T16=[cells[2]["lo95"], cells[2]["hi95"]], surface=rep.to_csv(),
                   diagnostics=rep.diagnostics)


# ---------------------------------------------------------------- 7, 8

PICARD_CASES = ((D1, 3.0), (D2, 1.5), (D3, 1.2))
AMPLITUDE = 0.05


def _picard(gs, p, amplitude, **kw):
    phi = sample_profile(_grid(gs), "gaussian", amplitude=amplitude)
    cfg = SolverConfig(d=gs["d"], p=p, **kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HorizonWarning)
        traj, rep = picard_solve(phi, cfg)
    return phi, cfg, traj, rep


def crit_picard(seed):
    ok = True
    out = {}
    for gs, p in PICARD_CASES:
        _, _, _, rep = _picard(gs, p, AMPLITUDE)
        _, _, _, half = _picard(gs, p, AMPLITUDE / 2)
        decrease = rep.residuals[0] / rep.residuals[-1]
        scale = rep.ratios[0] / half.ratios[0] if rep.ratios and half.ratios else math.nan
        scale_ok = 2 ** p / 1.5 <= scale <= 2 ** p * 1.5
        case_ok = (rep.converged and rep.iterations <= 10 and all(r < 1 for r in rep.ratios)
                   and rep.certificate <= 2e-8 and decrease >= 10 and scale_ok)
        out[f"d{gs['d']}"] = {"iterations": rep.iterations, "distances": rep.distances, "ratios": rep.ratios,
                                "certificate": rep.certificate, "residual_decrease": decrease,
                                "halving_scale": scale, "expected_scale": 2 ** p, "eta": rep.eta_measured,
                                "membership": rep.membership, "passed": case_ok}
        ok &= case_ok
        del rep, half
    return _result("picard", ok, **out)


def crit_crossval(seed):
    out = {}
    ok = True
    for gs, p in PICARD_CASES[:2]:
        _, cfg, traj, _ = _picard(gs, p, AMPLITUDE)
        disc = crossvalidate(traj, cfg)
        out[f"d{gs['d']}_nonlinear"] = disc
        ok &= disc <= 1e-3
    _, cfg, traj, _ = _picard(D1, 3.0, AMPLITUDE, nonlinear=False)
    lin = crossvalidate(traj, cfg)
    out["d1_linear"] = lin
    ok &= lin <= 1e-8
    return _result("crossval", ok, **out)


# ---------------------------------------------------------------- 9

def crit_flr_tail(seed):
    g = _grid(D1)
    f = sample_profile(g, "gaussian")
    pou = build_partition(g)
    rep = flr_tail_experiment(f, pou, Ensemble("gaussian", seed), 3.0, trials=1000)
    fit = rep.fits["M2"]
    closed = (math.pi ** 1.5 * math.sqrt(4 * math.pi / 3)) ** (1 / 3)
    grid_M = [closed - 1e-3, closed - 5e-5, closed + 5e-5, closed + 1e-3]
    det = flr_tail_experiment(f, pou, Ensemble("ones", seed), 3.0, M_grid=grid_M, trials=1000)
    value = det.diagnostics["median_norm"]
    lo, hi = step_location(det)
    step_ok = (det.diagnostics["min_norm"] == det.diagnostics["max_norm"] and abs(value - closed) <= 1e-4
               and lo is not None and hi is not None and lo < value < hi)
    ok = fit is not None and fit["slope"] < 0 and fit["r2"] >= 0.9 and step_ok
    return _result("flr-tail", ok, fit=fit, surface=rep.to_csv(), deterministic_norm=value, closed_form=closed,
                   step_bracket=[lo, hi])


# ---------------------------------------------------------------- 10

def crit_pseudoconformal(seed):
    iso = {}
    for gs in (D1, D2):
        g = _grid(gs)
        for kind, params in TEST_FAMILY:
            f = sample_profile(g, kind, **params)
            v, s = pseudoconformal(f, 3.0)
            back, _ = inverse_pseudoconformal(v, s)
            iso[f"d{gs['d']}:{kind}"] = {
                "isometry": abs(lp_norm(v, 2) / lp_norm(f, 2) - 1),
                "roundtrip": float(np.linalg.norm(back.values - f.values) / np.linalg.norm(f.values))}
    u_plus = sample_profile(_grid(D1), "gaussian")
    ref = (2 * math.pi) ** -0.5 * np.conj(fourier(u_plus).values)
    errs = {}
    for t in (10.0, 25.0, 50.0):
        v, _ = pseudoconformal(evolve_fresnel(u_plus, t), t)
        errs[str(t)] = float(np.linalg.norm(v.values - ref) / np.linalg.norm(ref))
    e = list(errs.values())
    ok = (max(x["isometry"] for x in iso.values()) <= 1e-10 and max(x["roundtrip"] for x in iso.values()) <= 1e-10
          and e[-1] <= 0.05 and e[0] > e[1] > e[2])
    return _result("pseudoconformal", ok, isometry=iso, error_vs_time=errs)


# ---------------------------------------------------------------- eta calibration

def crit_eta_calibration(seed, table=None):
    try:
        tab = load_table() if table is None else table
        rows = check_table(tab)
    except Exception as exc:  # a corrupted table must fail the criterion, not crash the suite
        return _result("eta-calibration", False, error=f"{type(exc).__name__}: {exc}")
    return _result("eta-calibration", bool(rows) and all(r["passed"] for r in rows), rows=rows)


CRITERIA = {
    "exponents": crit_exponents,
    "dispersive": crit_dispersive,
    "stnorm": crit_stnorm,
    "partition": crit_partition,
    "large-deviation": crit_large_deviation,
    "linear-tail": crit_linear_tail,
    "picard": crit_picard,
    "crossval": crit_crossval,
    "flr-tail": crit_flr_tail,
    "pseudoconformal": crit_pseudoconformal,
    "eta-calibration": crit_eta_calibration,
}
ORDER = list(CRITERIA) + ["determinism"]
DETERMINISM_THREADS = (1, 8)


def set_threads(n):
    _parallel.set_threads(n)
    _accel.set_threads(n)


def _run_pass(names, seed, threads, log):
    set_threads(threads)
    out = {}
    for name in names:
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AccuracyWarning)
            out[name] = CRITERIA[name](seed)
        if log:
            log(name, out[name]["passed"], time.perf_counter() - t0, threads)
    return out


def canonical(obj):
    return json.dumps(obj, sort_keys=True, indent=1, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def run_acceptance(only=None, seed=0, threads=None, log=None):
    """Run the selected criteria; returns {name: result} in suite order.

    The determinism criterion runs the other selected criteria (all of them
    when it is selected alone) once per thread count in
    ``DETERMINISM_THREADS`` and compares the serialized results.
    """
    names = ORDER if not only else [n for n in ORDER if n in set(only)]
    unknown = set(only or ()) - set(ORDER)
    if unknown:
        raise ConfigError(f"unknown criteria {sorted(unknown)}; choose from {ORDER}")
    work = [n for n in names if n != "determinism"]
    threads = threads or _parallel.get_threads()
    results = {}
    if "determinism" in names:
        if not work:
            work = list(CRITERIA)
        passes = [_run_pass(work, seed, n, log) for n in DETERMINISM_THREADS]
        blobs = [canonical(p_) for p_ in passes]
        mismatched = [n for n in work if canonical(passes[0][n]) != canonical(passes[1][n])]
        results.update({n: passes[0][n] for n in work if n in names})
        results["determinism"] = _result("determinism", blobs[0] == blobs[1] and not mismatched,
                                         thread_counts=list(DETERMINISM_THREADS), mismatched=mismatched,
                                         bytes=len(blobs[0]))
    else:
        results.update(_run_pass(work, seed, threads, log))
    set_threads(threads)
    return {n: results[n] for n in ORDER if n in results}
