"""The free Schrodinger group exp(it Laplacian) on sampled fields.

Two discretizations:

* periodic multiplier ``exp(-i t |xi|^2)`` on the box (exactly unitary, wraps
  around once mass reaches the box edge);
* Fresnel factorization chirp - transform - chirp, exact for box-supported
  data at every ``t > 0``.  Its output lives on the dilated frame
  ``grid.dilated(t)`` (nodes ``2 t xi``).

Both are unitary for the discrete L^2 norm, so the inverse of either is its
adjoint; :func:`pullback` undoes :func:`propagate`.
"""
from dataclasses import dataclass
import math
import warnings

import numpy as np

from .errors import AccuracyWarning, FitFailureError, SingularTimeError, WraparoundWarning
from .grid import Field, Grid, centered_dft, lp_norm, mass

BOUNDARY_TOL = 1e-6
BOUNDARY_LAYER = 0.1


def default_t_min(grid):
    return grid.L / 10


def boundary_fraction(values, grid, layer=BOUNDARY_LAYER):
    """Share of mass within ``layer * L`` of the box edge."""
    dens = np.abs(values) ** 2
    total = dens.sum()
    if total == 0:
        return 0.0
    edge = np.zeros(grid.shape, dtype=bool)
    for x in grid.coords():
        edge = edge | (np.abs(x) >= (1 - layer) * grid.L)
    return float(dens[edge].sum() / total)


def chirp_increment(grid, t):
    """Largest phase step of exp(i|y|^2/4t) between neighbouring samples in the box."""
    h, L = grid.h, grid.L
    return (2 * L * h + h * h) / (4 * abs(t))


def periodic_values(values, grid, t):
    if t == 0:
        return np.array(values, dtype=np.complex128, copy=True)
    k2 = np.zeros(grid.shape)
    k = grid.freqs()
    for i in range(grid.d):
        shp = [1] * grid.d
        shp[i] = grid.N
        k2 = k2 + (k ** 2).reshape(shp)
    return np.fft.ifftn(np.exp(-1j * t * k2) * np.fft.fftn(values))


def _chirp(grid, t):
    return np.exp(1j * grid.radius2() / (4 * t))


def fresnel_values(values, grid, t):
    """exp(it Lap) via (4 pi i t)^(-d/2) e^{i|x|^2/4t} FT[e^{i|y|^2/4t} f](x/2t); output on grid.dilated(t)."""
    out_grid = grid.dilated(t)
    g = values * _chirp(grid, t)
    gh = centered_dft(g, grid)
    pref = (4 * math.pi * t) ** (-grid.d / 2) * np.exp(-1j * math.pi * grid.d / 4)
    return pref * _chirp(out_grid, t) * gh, out_grid


def fresnel_pullback_values(values, base, t):
    """Inverse of :func:`fresnel_values`: frame samples at time t back to the base grid."""
    frame = base.dilated(t)
    pref = (4 * math.pi * t) ** (base.d / 2) * np.exp(1j * math.pi * base.d / 4)
    gh = pref * np.conj(_chirp(frame, t)) * values
    g = centered_dft(gh, base.dual(), inverse=True)
    return g * np.conj(_chirp(base, t))


def _check_fresnel(grid, t, t_min):
    if t == 0:
        raise SingularTimeError("Fresnel propagator is singular at t = 0")
    if t < 0:
        raise SingularTimeError(f"Fresnel backend needs t > 0, got {t}")
    notes = []
    if t_min is None:
        t_min = default_t_min(grid)
    if t < t_min:
        notes.append(f"t={t:.4g} below t_min={t_min:.4g}")
    if chirp_increment(grid, t) >= math.pi:
        notes.append(f"chirp under-resolved at t={t:.4g} (phase step {chirp_increment(grid, t):.3g} >= pi)")
    return notes


def evolve_periodic(f, t):
    """exp(it Lap) f by the periodic multiplier; flags wraparound in ``meta['warnings']``."""
    vals = periodic_values(f.values, f.grid, t)
    notes = []
    frac = boundary_fraction(vals, f.grid)
    if frac > BOUNDARY_TOL:
        msg = f"boundary mass fraction {frac:.2e} at t={t:.4g}: periodic wraparound contamination"
        warnings.warn(msg, WraparoundWarning, stacklevel=2)
        notes.append(msg)
    return Field(f.grid, vals, "x", {**f.meta, "t": t, "backend": "periodic",
                                     "boundary_fraction": frac, "warnings": notes})


def evolve_fresnel(f, t, t_min=None):
    """exp(it Lap) f on the dilated frame; exact for box-supported data at any t > 0."""
    notes = _check_fresnel(f.grid, t, t_min)
    for msg in notes:
        warnings.warn(msg, AccuracyWarning, stacklevel=2)
    vals, frame = fresnel_values(f.values, f.grid, t)
    return Field(frame, vals, "x", {**f.meta, "t": t, "backend": "fresnel", "warnings": notes,
                                    "base_L": f.grid.L})


def evolve(f, t, backend="auto", t_min=None):
    if backend == "periodic":
        return evolve_periodic(f, t)
    if backend == "fresnel":
        return evolve_fresnel(f, t, t_min)
    if backend != "auto":
        raise ValueError(f"unknown backend {backend!r}")
    if t_min is None:
        t_min = default_t_min(f.grid)
    return evolve_fresnel(f, t, t_min) if t >= t_min else evolve_periodic(f, t)


# ---------------------------------------------------------------- raw-array helpers used by the solvers

def propagate(values, base, t, t_min):
    """Free flow of base-grid samples to time t: (samples, frame grid)."""
    if t >= t_min:
        return fresnel_values(values, base, t)
    return periodic_values(values, base, t), base


def pullback(values, base, t, t_min):
    """Adjoint of :func:`propagate` (its exact inverse)."""
    if t >= t_min:
        return fresnel_pullback_values(values, base, t)
    return periodic_values(values, base, -t)


def frame_of(base, t, t_min):
    return base.dilated(t) if t >= t_min else base


# ---------------------------------------------------------------- decay measurements

@dataclass
class DecayFit:
    times: np.ndarray
    norms: np.ndarray
    slope: float
    intercept: float
    residual: float

    def csv(self):
        lines = ["t,norm"]
        lines += [f"{t:.17g},{n:.17g}" for t, n in zip(self.times, self.norms)]
        return "\n".join(lines) + "\n"

    def summary(self):
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual,
                "n_points": int(len(self.times))}


def loglog_fit(times, norms):
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    ok = np.isfinite(norms) & (norms > 0) & (times > 0)
    if ok.sum() < 3:
        raise FitFailureError(f"only {int(ok.sum())} usable points for a power-law fit")
    x, y = np.log(times[ok]), np.log(norms[ok])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), float(intercept), resid


def dispersive_decay_fit(f, r, times, t_min=None):
    """Least-squares slope of log ||exp(it Lap) f||_{L^r} against log t (Fresnel backend)."""
    times = np.asarray(times, dtype=float)
    if len(times) < 8:
        raise FitFailureError("decay fit needs at least 8 times")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        norms = np.array([lp_norm(evolve_fresnel(f, t, t_min), r) for t in times])
    slope, intercept, resid = loglog_fit(times, norms)
    return DecayFit(times, norms, slope, intercept, resid)


def dispersive_constant(f, times, t_min=None):
    """Largest observed t^(d/2) ||exp(it Lap) f||_inf / ||f||_1."""
    l1 = lp_norm(f, 1)
    d = f.grid.d
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        vals = [lp_norm(evolve_fresnel(f, t, t_min), math.inf) * t ** (d / 2) / l1 for t in times]
    return float(max(vals))


def mass_drift(f, t, backend="auto"):
    """Relative change of mass under the free flow."""
    m0 = mass(f)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m1 = mass(evolve(f, t, backend))
    return abs(m1 - m0) / m0 if m0 else 0.0


__all__ = ["evolve_periodic", "evolve_fresnel", "evolve", "dispersive_decay_fit", "DecayFit",
           "propagate", "pullback", "frame_of", "Grid"]
