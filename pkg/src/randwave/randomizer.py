"""Physical-space randomization of final states.

The partition of unity is built from unit-lattice translates of the plateau
bump, ``psi_k = phi_k / sum_l phi_l``.  It is stored as a sparse matrix
(grid points x lattice sites), so ``f^omega = f * (Psi @ g)`` for a whole
batch of coefficient vectors at once.
"""
from dataclasses import dataclass, field
import itertools
import math

import numpy as np
from scipy import integrate, sparse

from . import rng
from .errors import BumpCoverageError, ConfigError, InvalidExponentError, TruncationBiasError
from .grid import Field, bump, fourier, lp_norm, mass

FAMILIES = ("gaussian", "rademacher", "uniform", "ones")
MARGIN = 2.0
MARGIN_TOL = 1e-10

# purposes separate the keyed streams of different experiments
PURPOSE_RANDOMIZE = 1


@dataclass
class PartitionOfUnity:
    grid: object
    keys: np.ndarray
    matrix: sparse.csr_matrix
    denominator: np.ndarray

    @property
    def size(self):
        return len(self.keys)

    def psi(self, i):
        """Dense samples of the i-th cutoff."""
        col = self.matrix.getcol(i).toarray().ravel()
        return col.reshape(self.grid.shape)

    def index(self, k):
        k = tuple(int(v) for v in np.atleast_1d(k))
        for i, key in enumerate(self.keys):
            if tuple(key) == k:
                return i
        raise KeyError(k)

    def total(self):
        """Sum of all cutoffs at every grid point."""
        return np.asarray(self.matrix.sum(axis=1)).reshape(self.grid.shape)

    def overlap_count(self):
        return np.diff(self.matrix.indptr).reshape(self.grid.shape)

    def combine(self, coeffs):
        """sum_k g_k psi_k for coefficient rows; returns shape (S, *grid.shape)."""
        coeffs = np.atleast_2d(coeffs)
        out = self.matrix @ coeffs.T
        return np.asarray(out).T.reshape((coeffs.shape[0],) + self.grid.shape)

    def pieces(self, f, rel_tol=0.0):
        """Localized pieces psi_k f with their lattice indices, dropping those below ``rel_tol * ||f||_2``."""
        fv = f.values.reshape(-1)
        csc = self.matrix.tocsc()
        keep, out = [], []
        norm_f = math.sqrt(mass(f)) if rel_tol > 0 else 0.0
        cell = self.grid.cell
        for i in range(self.size):
            lo, hi = csc.indptr[i], csc.indptr[i + 1]
            rows, w = csc.indices[lo:hi], csc.data[lo:hi]
            vals = w * fv[rows]
            nrm = math.sqrt(float(np.sum(np.abs(vals) ** 2)) * cell)
            if nrm == 0.0 or nrm <= rel_tol * norm_f:
                continue
            piece = np.zeros(fv.size, dtype=np.complex128)
            piece[rows] = vals
            keep.append(i)
            out.append(piece.reshape(self.grid.shape))
        return np.array(keep, dtype=int), out


def build_partition(grid):
    """Sample the lattice partition of unity on ``grid``."""
    if grid.L < 4:
        raise ConfigError(f"partition needs box half-width L >= 4, got {grid.L}")
    d, h = grid.d, grid.h
    ax = grid.axis()
    kmax = int(math.ceil(grid.L)) + 2
    rows, cols, vals, keys = [], [], [], []
    strides = [grid.N ** (d - 1 - i) for i in range(d)]
    for k in itertools.product(range(-kmax, kmax + 1), repeat=d):
        idx_axes = []
        for i in range(d):
            sel = np.nonzero(np.abs(ax - k[i]) < 2)[0]
            if sel.size == 0:
                break
            idx_axes.append(sel)
        else:
            r2 = 0.0
            flat = 0
            for i, sel in enumerate(idx_axes):
                shp = [1] * d
                shp[i] = sel.size
                r2 = r2 + ((ax[sel] - k[i]) ** 2).reshape(shp)
                flat = flat + (sel * strides[i]).reshape(shp)
            phi = bump(np.sqrt(r2))
            nz = phi > 0
            if not np.any(nz):
                continue
            rows.append(np.broadcast_to(flat, phi.shape)[nz])
            vals.append(phi[nz])
            cols.append(np.full(int(nz.sum()), len(keys)))
            keys.append(k)
    n = grid.N ** d
    phi_mat = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=(n, len(keys)))
    denom = np.asarray(phi_mat.sum(axis=1)).ravel()
    if np.min(denom) < 1e-12:
        raise BumpCoverageError(f"bump translates fail to cover the box (min sum {np.min(denom):.3e})")
    psi_mat = sparse.diags(1.0 / denom) @ phi_mat
    psi_mat = sparse.csr_matrix(psi_mat)
    psi_mat.sort_indices()
    return PartitionOfUnity(grid, np.array(keys, dtype=np.int64).reshape(len(keys), d), psi_mat,
                            denom.reshape(grid.shape))


@dataclass(frozen=True)
class Ensemble:
    """Sub-Gaussian coefficient family with its constant c in |E e^{gamma g}| <= e^{c gamma^2}."""
    family: str = "gaussian"
    seed: int = 0
    c: float = field(default=None)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown ensemble {self.family!r}; choose from {FAMILIES}")
        if self.c is None:
            object.__setattr__(self, "c", None if self.family == "ones" else 0.5)

    def draw(self, trials, ids, purpose=PURPOSE_RANDOMIZE):
        """Coefficients for each (trial, lattice id); shape (len(trials), len(ids))."""
        trials = np.atleast_1d(trials)
        if self.family == "gaussian":
            return rng.keyed_normal(self.seed, purpose, trials, ids)
        if self.family == "ones":
            return np.ones((len(trials), len(np.atleast_1d(ids))))
        u = rng.keyed_uniform(self.seed, purpose, trials, ids)
        if self.family == "rademacher":
            return np.where(u < 0.5, -1.0, 1.0)
        return math.sqrt(3.0) * (2.0 * u - 1.0)

    def mgf(self, gamma):
        """E exp(gamma g), by quadrature for continuous families."""
        gamma = float(gamma)
        if self.family == "rademacher":
            return math.cosh(gamma)
        if self.family == "ones":
            return math.exp(gamma)
        if self.family == "uniform":
            s3 = math.sqrt(3.0)
            val, _ = integrate.quad(lambda x: math.exp(gamma * x) / (2 * s3), -s3, s3)
            return val
        dens = lambda x: math.exp(gamma * x - 0.5 * x * x) / math.sqrt(2 * math.pi)
        val, _ = integrate.quad(dens, gamma - 40, gamma + 40, points=[gamma], limit=200)
        return val

    def certify(self, gammas=None):
        """Largest ratio |E e^{gamma g}| / e^{c gamma^2} over a gamma grid; <= 1 certifies c."""
        if self.c is None:
            return math.inf
        if gammas is None:
            gammas = np.linspace(-10, 10, 201)
        return max(abs(self.mgf(g)) / math.exp(self.c * g * g) for g in gammas)

    def describe(self):
        return {"family": self.family, "seed": int(self.seed), "c": self.c}


def draw_coefficients(ensemble, keys, trial):
    """Map lattice index -> coefficient for one trial (keyed, order independent)."""
    keys = np.atleast_2d(np.asarray(keys, dtype=np.int64))
    g = ensemble.draw([trial], rng.lattice_ids(keys))[0]
    return {tuple(int(v) for v in k): float(x) for k, x in zip(keys, g)}


def coefficient_matrix(ensemble, pou, trials, purpose=PURPOSE_RANDOMIZE, columns=None):
    keys = pou.keys if columns is None else pou.keys[columns]
    return ensemble.draw(np.asarray(trials), rng.lattice_ids(keys), purpose)


def margin_fraction(f, margin=MARGIN):
    g = f.grid
    dens = np.abs(f.values) ** 2
    total = dens.sum()
    if total == 0:
        return 0.0
    edge = np.zeros(g.shape, dtype=bool)
    for x in g.coords():
        edge = edge | (np.abs(x) > g.L - margin)
    return float(dens[edge].sum() / total)


def _check_margin(f):
    frac = margin_fraction(f)
    if frac > MARGIN_TOL:
        raise TruncationBiasError(f"datum has mass fraction {frac:.3e} within {MARGIN} of the box edge")


def randomize(f, pou, ensemble, trial=0):
    """f^omega = sum_k g_k(omega) psi_k f for the keyed draw ``trial``."""
    _check_margin(f)
    g = coefficient_matrix(ensemble, pou, [trial])
    weights = pou.combine(g)[0]
    return Field(f.grid, f.values * weights, "x",
                 {**f.meta, "ensemble": ensemble.describe(), "trial": int(trial)})


def randomize_batch(f, pou, ensemble, trials):
    """Stack of randomized fields, shape (len(trials), *grid.shape)."""
    _check_margin(f)
    g = coefficient_matrix(ensemble, pou, trials)
    return f.values[None] * pou.combine(g)


def l2_split_ratio(f, pou, weight_exponent=0.0):
    """(sum_k || w psi_k f ||_2^2, its ratio to || w f ||_2^2) with weight w = |x|^eps."""
    dens = np.abs(f.values) ** 2
    if weight_exponent:
        dens = dens * f.grid.radius2() ** weight_exponent
    sq = pou.matrix.multiply(pou.matrix)
    per_point = np.asarray(sq.sum(axis=1)).reshape(f.grid.shape)
    whole = float(np.sum(dens)) * f.grid.cell
    split = float(np.sum(dens * per_point)) * f.grid.cell
    return split, (split / whole if whole else 1.0)


def fourier_lebesgue_norm(f, rho):
    """|| fhat ||_{L^rho} for rho in (2, inf)."""
    if not 2 < rho < math.inf:
        raise InvalidExponentError(f"Fourier-Lebesgue exponent must lie in (2, inf), got {rho}")
    return lp_norm(fourier(f), rho)


def hausdorff_young_constant(d, rho):
    """Sharp-free constant (2 pi)^(d/rho) of ||fhat||_rho <= C ||f||_rho' in this transform convention."""
    return (2 * math.pi) ** (d / rho)
