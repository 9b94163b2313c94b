"""Randomized final states and wave operators for the mass-subcritical power NLS.

Modules
-------
exponents     derived exponent system for (d, p)
grid          sampled fields, norms, transforms, snapshots
propagator    free Schrodinger group (periodic and Fresnel) and decay fits
randomizer    partition of unity, coefficient ensembles, randomization
spacetime     L^q_t L^r_x norms on (T, inf)
waveop        Duhamel integral, Picard solver, split-step cross-check
montecarlo    tail experiments
acceptance    the acceptance suite behind ``randwave reproduce``
"""
__version__ = "0.1.0"

from ._accel import BACKEND
from .exponents import ExponentSet, derive_exponents, strauss_exponent, validate_exponents
from .grid import Field, Grid, fourier, inverse_fourier, lp_norm, mass, sample_profile
from .propagator import evolve, evolve_fresnel, evolve_periodic
from .randomizer import Ensemble, build_partition, randomize
from .spacetime import TimeGrid, spacetime_norm
from .waveop import SolverConfig, picard_solve

__all__ = [
    "BACKEND", "Ensemble", "ExponentSet", "Field", "Grid", "SolverConfig", "TimeGrid", "build_partition",
    "derive_exponents", "evolve", "evolve_fresnel", "evolve_periodic", "fourier", "inverse_fourier",
    "lp_norm", "mass", "picard_solve", "randomize", "sample_profile", "spacetime_norm", "strauss_exponent",
    "validate_exponents",
]
