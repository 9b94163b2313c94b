import io
import math

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from randwave.errors import ConfigError, InvalidExponentError, RandwaveError, TruncationOverflowError
from randwave.grid import (Field, Grid, fourier, inverse_fourier, lp_norm, mass, parse_profile, read_field, rescale,
                           sample_profile, slice_csv, spectral_interpolate, write_field)


@pytest.mark.parametrize("args", [(4, 64, 10.0), (1, 100, 10.0), (1, 4, 10.0), (2, 64, 0.0)])
def test_grid_rejects_bad_shapes(args):
    with pytest.raises(ConfigError):
        Grid(*args)


def test_field_is_immutable_and_finite(g1):
    f = sample_profile(g1, "gaussian")
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    bad = np.zeros(g1.shape, dtype=complex)
    bad[3] = np.nan
    with pytest.raises(RandwaveError):
        Field(g1, bad)
    with pytest.raises(ConfigError):
        Field(g1, np.zeros(10))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_gaussian_norms_match_closed_forms(d):
    g = Grid(d, {1: 512, 2: 128, 3: 64}[d], {1: 20.0, 2: 10.0, 3: 6.0}[d])
    f = sample_profile(g, "gaussian")
    assert mass(f) == pytest.approx((math.pi / 2) ** (d / 2), rel=1e-10)
    assert lp_norm(f, 1) == pytest.approx(math.pi ** (d / 2), rel=1e-10)
    assert lp_norm(f, math.inf) == pytest.approx(1.0, abs=1e-15)
    for r in (3.0, 5.0):
        assert lp_norm(f, r) == pytest.approx((math.pi / r) ** (d / (2 * r)), rel=1e-10)


def test_norm_rejects_small_exponent(g1):
    with pytest.raises(InvalidExponentError):
        lp_norm(sample_profile(g1, "gaussian"), 0.5)


def test_zero_amplitude_gives_zero_field(g1):
    f = sample_profile(g1, "gaussian", amplitude=0.0)
    assert not np.any(f.values)
    assert mass(f) == 0.0


def test_profile_outside_box_raises(g1):
    with pytest.raises(TruncationOverflowError) as err:
        sample_profile(g1, "gaussian", center=39.0)
    assert err.value.outside_mass > 0


def test_parse_profile():
    assert parse_profile("gaussian:width=2,center=1/-1") == ("gaussian", {"width": 2.0, "center": [1.0, -1.0]})
    with pytest.raises(ConfigError):
        parse_profile("triangle:width=1")


def test_fourier_of_gaussian(g1):
    F = fourier(sample_profile(g1, "gaussian"))
    xi = F.grid.axis()
    ref = math.sqrt(math.pi) * np.exp(-xi ** 2 / 4)
    assert np.max(np.abs(F.values - ref)) <= 1e-10


def test_plancherel_1d():
    f = sample_profile(Grid(1, 512, 20.0), "modulated_gaussian", momentum=1.5)
    assert mass(fourier(f)) == pytest.approx(2 * math.pi * mass(f), rel=1e-10)


def test_norm_of_evolved_gaussian():
    # |exp(i Lap) e^{-x^2}| = 17^{-1/4} e^{-x^2/17}
    from randwave.propagator import evolve_periodic
    u = evolve_periodic(sample_profile(Grid(1, 1024, 40.0), "gaussian"), 1.0)
    assert lp_norm(u, 5.0) == pytest.approx((math.pi / 5) ** 0.1 * 17 ** -0.15, rel=1e-10)


def test_fourier_roundtrip_and_plancherel(g2):
    f = sample_profile(g2, "modulated_gaussian", momentum=[2.0, -1.0], center=[1.0, 0.5])
    F = fourier(f)
    back = inverse_fourier(F)
    assert np.max(np.abs(back.values - f.values)) <= 1e-12
    assert mass(F) == pytest.approx((2 * math.pi) ** 2 * mass(f), rel=1e-12)
    with pytest.raises(ConfigError):
        fourier(F)
    with pytest.raises(ConfigError):
        inverse_fourier(f)


def test_refinement_converges():
    coarse = sample_profile(Grid(1, 256, 20.0), "gaussian")
    fine = sample_profile(Grid(1, 1024, 20.0), "gaussian")
    for r in (2.0, 5.0):
        assert abs(lp_norm(coarse, r) - lp_norm(fine, r)) <= 1e-8


@settings(max_examples=60, deadline=None)
@given(st.floats(0.6, 3.0), st.floats(-3.0, 3.0), st.floats(1.0, 8.0), st.floats(1.0, 8.0), st.floats(0.0, 1.0))
def test_holder_interpolation(width, center, r0, r1, theta):
    g = Grid(1, 512, 20.0)
    f = sample_profile(g, "gaussian", width=width, center=center)
    r = 1 / ((1 - theta) / r0 + theta / r1)
    bound = lp_norm(f, r0) ** (1 - theta) * lp_norm(f, r1) ** theta
    assert lp_norm(f, r) <= bound * (1 + 1e-12)


def test_spectral_interpolation_is_exact_on_nodes(g1):
    f = sample_profile(g1, "gaussian", width=2.0)
    x = g1.axis()
    assert np.max(np.abs(spectral_interpolate(f, x) - f.values)) <= 1e-12
    off = np.linspace(-5, 5, 37)
    assert np.max(np.abs(spectral_interpolate(f, off) - np.exp(-off ** 2 / 4))) <= 1e-10


def test_rescale_identity_and_scaling(g1):
    f = sample_profile(g1, "gaussian")
    assert np.array_equal(rescale(f, 1.0, 3.0).values, f.values)
    p = 3.0
    assert mass(rescale(f, 2.0, p)) / mass(f) == pytest.approx(2 ** (1 / 3), rel=1e-6)
    for lam in (0.5, 2.0):
        f_lam = rescale(f, lam, p)
        for r in (2.0, 5.0, math.inf):
            expected = lam ** (2 / p - (0 if math.isinf(r) else 1 / r))
            assert lp_norm(f_lam, r) / lp_norm(f, r) == pytest.approx(expected, rel=1e-6)
    with pytest.raises(ConfigError):
        rescale(f, 0.0, p)
    with pytest.raises(TruncationOverflowError):
        rescale(sample_profile(g1, "gaussian", width=8.0), 0.2, p)


def test_snapshot_roundtrip(g2, tmp_path):
    f = sample_profile(g2, "bump", scale=2.0, phase=0.3)
    path = tmp_path / "f.rwf"
    write_field(f, path, {"seed": 7})
    back = read_field(path)
    assert back.grid == f.grid and back.space == "x"
    assert np.array_equal(back.values, f.values)
    assert back.meta["seed"] == 7
    buf1, buf2, buf3 = io.BytesIO(), io.BytesIO(), io.BytesIO()
    write_field(back, buf1)
    write_field(back, buf2)
    assert buf1.getvalue() == buf2.getvalue()
    buf1.seek(0)
    write_field(read_field(buf1), buf3)
    assert buf3.getvalue() == buf2.getvalue()


def test_snapshot_rejects_garbage():
    with pytest.raises(ConfigError):
        read_field(io.BytesIO(b"short"))
    with pytest.raises(ConfigError):
        read_field(io.BytesIO(b"NOTMAGIC" + bytes(64)))


def test_slice_csv(g2):
    text = slice_csv(sample_profile(g2, "gaussian"))
    rows = text.strip().splitlines()
    assert rows[0] == "x,re,im,abs" and len(rows) == g2.N + 1
    peak = max(rows[1:], key=lambda r: float(r.split(",")[3]))
    assert float(peak.split(",")[0]) == 0.0
