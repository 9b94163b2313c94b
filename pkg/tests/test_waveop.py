import math
import warnings

import numpy as np
import pytest

from randwave.errors import (BlowUpError, ConfigError, EtaTooLargeError, HorizonWarning, SingularTimeError,
                             StepTooLargeError)
from randwave.grid import Field, Grid, fourier, lp_norm, mass, sample_profile
from randwave.propagator import evolve_fresnel, periodic_values
from randwave.spacetime import TimeGrid
from randwave.waveop import (SolverConfig, Trajectory, crossvalidate, duhamel, duhamel_profiles, first_correction,
                             fixed_point_gap, inverse_pseudoconformal, nonlinear_estimate_ratios, pcnls_weight,
                             picard_solve, pseudoconformal, splitstep_evolve)

GRID = Grid(1, 512, 20.0)
P = 3.0
SMALL = 0.05


def solve(amplitude=SMALL, grid=GRID, p=P, kind="gaussian", initial_scale=1.0, **kw):
    phi = sample_profile(grid, kind, amplitude=amplitude)
    kw.setdefault("T_max", 100.0)
    kw.setdefault("M", 32)
    cfg = SolverConfig(d=grid.d, p=p, **kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HorizonWarning)
        traj, rep = picard_solve(phi, cfg, initial_scale)
    return phi, cfg, traj, rep


@pytest.fixture(scope="module")
def small():
    return solve(T_max=1000.0, M=64)


# ---------------------------------------------------------------- configuration

def test_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(d=1, p=3.0, mu=0)
    with pytest.raises(ConfigError):
        SolverConfig(d=1, p=3.0, max_iter=3)
    with pytest.raises(ConfigError):
        SolverConfig(d=1, p=3.0, T=0.5)
    phi = sample_profile(Grid(2, 64, 10.0), "gaussian")
    with pytest.raises(ConfigError):
        picard_solve(phi, SolverConfig(d=1, p=3.0))


# ---------------------------------------------------------------- Duhamel integral

def power_profiles(tg, kappa):
    g0 = sample_profile(GRID, "modulated_gaussian", momentum=1.0).values
    return g0, g0[None] * tg.nodes[:, None] ** -kappa


@pytest.mark.parametrize("kappa", [1.5, 2.5, 4.0])
def test_duhamel_of_power_law_profiles(kappa):
    # for exp(-is Lap) F(s) = g0 s^-kappa the integral over (t, inf) is g0 t^(1-kappa)/(kappa-1)
    errs = []
    for M in (64, 128):
        tg = TimeGrid(1.0, 1000.0, M)
        g0, G = power_profiles(tg, kappa)
        I, frac = duhamel_profiles(G, tg)
        exact = g0[None] * (tg.nodes ** (1 - kappa) / (kappa - 1))[:, None]
        errs.append(np.max(np.abs(I - exact)) / np.max(np.abs(exact)))
        assert 0 < frac < 1
    # third-order rule in log s: error ~ h^3 (kappa - 1)^3 / 24
    assert errs[0] <= 2e-3
    assert errs[0] / errs[1] >= 6


def test_duhamel_of_a_free_flow():
    # F(s) = exp(is Lap) g collapses the integral over (t, T') to (T' - t) exp(it Lap) g
    tg = TimeGrid(1.0, 100.0, 32)
    g = sample_profile(GRID, "gaussian").values
    G = np.broadcast_to(g, (len(tg.nodes),) + g.shape).copy()
    I, _ = duhamel_profiles(G, tg, tail=False)
    exact = (tg.nodes[-1] - tg.nodes)[:, None] * g[None]
    assert np.max(np.abs(I - exact)) <= 1e-3 * np.max(np.abs(exact))


def test_duhamel_between_nodes():
    tg = TimeGrid(1.0, 1000.0, 64)
    g0, G = power_profiles(tg, 2.5)
    F = Trajectory(GRID, tg.nodes, G, math.inf)
    for t in (1.0, 3.3, 17.0, 1000.0):
        got = duhamel(F, t, tg)
        ref = periodic_values(g0 * t ** -1.5 / 1.5, GRID, t)
        assert np.max(np.abs(got.values - ref)) <= 2e-3 * np.max(np.abs(ref))
    with pytest.raises(ConfigError):
        duhamel(F, 0.5, tg)


def test_duhamel_is_linear_and_vanishes_on_zero():
    tg = TimeGrid(1.0, 100.0, 32)
    _, A = power_profiles(tg, 2.0)
    _, B = power_profiles(tg, 3.0)
    IA, _ = duhamel_profiles(A, tg, tail=False)
    IB, _ = duhamel_profiles(B, tg, tail=False)
    IAB, _ = duhamel_profiles(2.0 * A - 3.0 * B, tg, tail=False)
    assert np.max(np.abs(IAB - (2.0 * IA - 3.0 * IB))) <= 1e-13 * np.max(np.abs(IAB))
    I0, frac = duhamel_profiles(np.zeros_like(A), tg)
    assert not np.any(I0) and frac == 0.0


def test_slow_decay_disables_tail_with_warning():
    tg = TimeGrid(1.0, 100.0, 32)
    _, G = power_profiles(tg, 0.5)
    with pytest.warns(HorizonWarning):
        duhamel_profiles(G, tg)


# ---------------------------------------------------------------- Picard map

def test_zero_final_state():
    _, _, traj, rep = solve(amplitude=0.0)
    assert rep.converged and rep.iterations == 1
    assert rep.distances == [0.0] and rep.certificate == 0.0
    assert not np.any(traj.profiles)
    assert rep.residuals == [0.0] * len(traj)


def test_linear_mode_returns_free_flow():
    phi, _, traj, rep = solve(nonlinear=False)
    assert rep.converged
    assert np.array_equal(traj.profiles[5], phi.values)
    assert rep.residuals == [0.0] * len(traj)


def test_small_data_converges(small):
    _, cfg, _, rep = small
    assert rep.converged and rep.iterations <= 10
    assert all(r < 1 for r in rep.ratios)
    assert rep.certificate <= 2 * cfg.delta_fix
    assert rep.residuals[0] / rep.residuals[-1] >= 10
    assert rep.membership["C_critical"] == pytest.approx(1.0, abs=0.05)


def test_contraction_ratio_scales_like_eta_to_p(small):
    _, _, _, rep = small
    _, _, _, half = solve(amplitude=SMALL / 2, T_max=1000.0, M=64)
    scale = rep.ratios[0] / half.ratios[0]
    assert 2 ** P / 1.5 <= scale <= 2 ** P * 1.5


def test_first_correction_sign_and_homogeneity():
    phi = sample_profile(GRID, "gaussian", amplitude=SMALL)
    cfg = dict(d=1, p=P, T_max=100.0, M=32)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HorizonWarning)
        plus = first_correction(phi, SolverConfig(mu=1, **cfg))
        minus = first_correction(phi, SolverConfig(mu=-1, **cfg))
        scaled = first_correction(phi * 2.0, SolverConfig(mu=1, **cfg))
    # the correction is a difference of iterates of size |phi|, so rounding scales with |phi|
    eps = 1e-13 * np.max(np.abs(phi.values))
    assert np.max(np.abs(minus + plus)) <= eps
    assert np.max(np.abs(scaled - 2.0 ** (P + 1) * plus)) <= 2.0 ** (P + 1) * eps


def test_fixed_point_is_independent_of_start(small):
    _, cfg, traj, _ = small
    _, _, from_zero, rep0 = solve(initial_scale=0.0, T_max=1000.0, M=64)
    _, _, from_two, rep2 = solve(initial_scale=2.0, T_max=1000.0, M=64)
    assert rep0.converged and rep2.converged
    assert fixed_point_gap(traj, from_zero, cfg) <= 3 * cfg.delta_fix
    assert fixed_point_gap(traj, from_two, cfg) <= 3 * cfg.delta_fix


def test_large_data_is_rejected():
    with pytest.raises((EtaTooLargeError, BlowUpError)) as err:
        with np.errstate(over="ignore", invalid="ignore"):
            solve(amplitude=8.0, max_iter=20)
    if isinstance(err.value, EtaTooLargeError):
        assert err.value.eta > 0


FAMILY = [(GRID, 3.0, "gaussian"), (GRID, 3.0, "bump"), (Grid(2, 64, 10.0), 1.5, "gaussian"),
          (Grid(3, 32, 8.0), 1.2, "gaussian")]


@pytest.mark.parametrize("grid,p,kind", FAMILY, ids=["d1-gauss", "d1-bump", "d2-gauss", "d3-gauss"])
def test_nonlinear_estimate_constants_are_moderate(grid, p, kind):
    for amp in (0.05, 0.2):
        _, cfg, traj, rep = solve(amplitude=amp, grid=grid, p=p, kind=kind)
        assert rep.converged
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HorizonWarning)
            nle, nle2 = nonlinear_estimate_ratios(traj, cfg)
        assert 0 < nle <= 10 and 0 < nle2 <= 10


# ---------------------------------------------------------------- split-step cross-check

@pytest.fixture(scope="module")
def datum():
    return sample_profile(GRID, "gaussian", amplitude=0.8)


def test_splitstep_is_second_order(datum):
    # self-convergence against a fine reference over one decade of step sizes
    ref = splitstep_evolve(datum, 1.0, [2.0], 25_600, 1, P).profiles[0]
    steps = np.array([100, 200, 400, 1000])
    errs = [np.linalg.norm(splitstep_evolve(datum, 1.0, [2.0], int(n), 1, P).profiles[0] - ref) for n in steps]
    slope = np.polyfit(np.log(1.0 / steps), np.log(errs), 1)[0]
    assert slope == pytest.approx(2.0, rel=0.2)
    for a, b in zip(errs, errs[1:]):
        assert a > b


def test_splitstep_conserves_mass(datum):
    assert splitstep_evolve(datum, 1.0, [2.0], 400, -1, P).mass_drift <= 1e-12


def test_splitstep_linear_mode_is_exact(datum):
    traj = splitstep_evolve(datum, 1.0, [1.5, 2.0], 200, 1, P, nonlinear=False)
    for prof in traj.profiles:
        assert np.max(np.abs(periodic_values(prof, GRID, 1.0) - datum.values)) <= 1e-13


def test_splitstep_guards(datum):
    with pytest.raises(ConfigError):
        splitstep_evolve(datum, 1.0, [2.0], 50, 1, P)
    with pytest.raises(ConfigError):
        splitstep_evolve(datum, 1.0, [2.0, 1.5], 200, 1, P)
    with pytest.raises(StepTooLargeError):
        splitstep_evolve(datum * 20.0, 1.0, [10.0], 100, 1, P)


def test_crossvalidation_agrees(small):
    _, cfg, traj, _ = small
    assert crossvalidate(traj, cfg) <= 1e-3
    _, cfg_lin, traj_lin, _ = solve(nonlinear=False, T_max=1000.0, M=64)
    assert crossvalidate(traj_lin, cfg_lin) <= 1e-8


def test_crossvalidation_of_zero_solution():
    _, cfg, traj, _ = solve(amplitude=0.0, T_max=1000.0, M=64)
    assert crossvalidate(traj, cfg) == 0.0


def test_crossvalidation_needs_room():
    _, cfg, traj, _ = solve(grid=Grid(1, 64, 4.0), T_max=100.0)
    with pytest.raises(ConfigError):
        crossvalidate(traj, cfg)


# ---------------------------------------------------------------- pseudoconformal transform

@pytest.mark.parametrize("grid", [Grid(1, 1024, 40.0), Grid(2, 128, 20.0)], ids=["d1", "d2"])
def test_pseudoconformal_isometry_and_roundtrip(grid):
    f = sample_profile(grid, "modulated_gaussian", momentum=1.0, width=2.0)
    for t in (0.5, 3.0):
        v, s = pseudoconformal(f, t)
        assert s == 1 / (2 * t)
        assert lp_norm(v, 2) == pytest.approx(lp_norm(f, 2), rel=1e-12)
        back, t_back = inverse_pseudoconformal(v, s)
        assert t_back == pytest.approx(t)
        assert np.max(np.abs(back.values - f.values)) <= 1e-12 * np.max(np.abs(f.values))


def test_pseudoconformal_rejects_nonpositive_time(g1):
    f = sample_profile(g1, "gaussian")
    with pytest.raises(SingularTimeError):
        pseudoconformal(f, 0.0)
    with pytest.raises(SingularTimeError):
        inverse_pseudoconformal(f, -1.0)


def test_pseudoconformal_limit_is_the_fourier_transform(g1):
    # v(s) -> (2 pi)^(-d/2) conj(fhat) as s -> 0 for the free flow
    u_plus = sample_profile(g1, "gaussian")
    ref = (2 * math.pi) ** -0.5 * np.conj(fourier(u_plus).values)
    errs = []
    for t in (10.0, 25.0, 50.0):
        v, _ = pseudoconformal(evolve_fresnel(u_plus, t), t)
        errs.append(np.linalg.norm(v.values - ref) / np.linalg.norm(ref))
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] <= 0.05


def test_pcnls_weight():
    assert pcnls_weight(0.5, 1, 3.0) == pytest.approx(0.5 ** -0.5)
    assert pcnls_weight(2.0, 2, 2.0) == 1.0
