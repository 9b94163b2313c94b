"""Complex fields sampled on uniform, isotropic boxes.

A :class:`Grid` is the lattice ``-L + j h`` (``j = 0..N-1``, ``h = 2L/N``) on
every axis.  Dual (frequency) lattices and the dilated frames produced by the
Fresnel propagator are again grids of this form, so one type covers all of
them.  Fourier transforms use the continuum convention
``fhat(xi) = int f(x) exp(-i x.xi) dx`` with ``(2 pi)^-d`` on the inverse.
"""
from dataclasses import dataclass, field
import io
import json
import math
import struct

import numpy as np
from scipy.special import erfc

from . import _accel
from .errors import ConfigError, InvalidExponentError, RandwaveError, TruncationOverflowError

OVERFLOW_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    d: int
    N: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ConfigError(f"grid dimension {self.d} not in 1..3")
        if self.N < 8 or self.N & (self.N - 1):
            raise ConfigError(f"N={self.N} must be a power of two >= 8")
        if not self.L > 0:
            raise ConfigError(f"half-width L={self.L} must be positive")

    @property
    def h(self):
        return 2 * self.L / self.N

    @property
    def cell(self):
        return self.h ** self.d

    @property
    def shape(self):
        return (self.N,) * self.d

    def axis(self):
        return -self.L + self.h * np.arange(self.N)

    def coords(self):
        """Sparse broadcastable coordinate arrays, one per axis."""
        ax = self.axis()
        out = []
        for i in range(self.d):
            shp = [1] * self.d
            shp[i] = self.N
            out.append(ax.reshape(shp))
        return out

    def radius2(self):
        r2 = np.zeros(self.shape)
        for c in self.coords():
            r2 = r2 + c * c
        return r2

    def dual(self):
        """Frequency lattice paired with this grid by the discrete transform."""
        return Grid(self.d, self.N, self.N * math.pi / (2 * self.L))

    def dilated(self, t):
        """Output frame of the Fresnel propagator at time ``t``: the dual lattice scaled by 2t."""
        return Grid(self.d, self.N, self.N * math.pi * t / self.L)

    def freqs(self):
        """Angular frequencies in numpy FFT order (for periodic multipliers)."""
        return 2 * math.pi * np.fft.fftfreq(self.N, d=self.h)


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray
    space: str = "x"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.shape != self.grid.shape:
            raise ConfigError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if self.space not in ("x", "k"):
            raise ConfigError(f"space flag must be 'x' or 'k', got {self.space!r}")
        if not np.all(np.isfinite(vals)):
            raise RandwaveError("field contains NaN or Inf samples")
        if vals is self.values and vals.flags.writeable:
            vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def with_values(self, values, **meta):
        m = dict(self.meta)
        m.update(meta)
        return Field(self.grid, values, self.space, m)

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__


def lp_norm(f, r):
    """Rectangle-rule L^r norm on the field's own lattice; ``r = inf`` gives the max."""
    return lattice_norm(f.values, f.grid, r)


def lattice_norm(values, grid, r):
    """L^r norm of raw samples on ``grid``."""
    r = float(r)
    if not r >= 1:
        raise InvalidExponentError(f"L^r norm needs r >= 1, got {r}")
    if math.isinf(r):
        return float(np.max(np.abs(values))) if values.size else 0.0
    return (_accel.abs_pow_sum(values, r) * grid.cell) ** (1 / r)


def mass(f):
    return lp_norm(f, 2) ** 2


def _checkerboard(grid):
    s = np.ones(grid.shape)
    sign = (-1.0) ** np.arange(grid.N)
    for i in range(grid.d):
        shp = [1] * grid.d
        shp[i] = grid.N
        s = s * sign.reshape(shp)
    return s


def centered_dft(values, grid, inverse=False):
    """Discrete continuum transform of samples on a centered grid.

    Forward maps samples on ``grid`` to samples of the transform on
    ``grid.dual()``.  N divisible by 4 makes the centering phases a pure
    checkerboard sign.
    """
    cb = _checkerboard(grid)
    if inverse:
        out = np.fft.ifftn(values * cb) * (grid.N / (2 * math.pi) * grid.h) ** grid.d
    else:
        out = np.fft.fftn(values * cb) * grid.cell
    return out * cb


def fourier(f):
    if f.space != "x":
        raise ConfigError("fourier() expects a physical-space field")
    return Field(f.grid.dual(), centered_dft(f.values, f.grid), "k", dict(f.meta))


def inverse_fourier(F):
    if F.space != "k":
        raise ConfigError("inverse_fourier() expects a frequency-space field")
    return Field(F.grid.dual(), centered_dft(F.values, F.grid, inverse=True), "x", dict(F.meta))


# ---------------------------------------------------------------- profiles

def bump(r):
    """Smooth plateau: 1 on r <= 1, 0 on r >= 2, exp(-1/t) blend in between."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    out[r <= 1] = 1.0
    mid = (r > 1) & (r < 2)
    a = np.exp(-1.0 / (2 - r[mid]))
    b = np.exp(-1.0 / (r[mid] - 1))
    out[mid] = a / (a + b)
    return out


def _centered_r2(grid, center, scale=1.0):
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.d,))
    r2 = 0.0
    for i, x in enumerate(grid.coords()):
        r2 = r2 + ((x - c[i]) / scale) ** 2
    return r2 + np.zeros(grid.shape)


def _evaluate_profile(grid, kind, amplitude=1.0, center=0.0, width=1.0, phase=0.0,
                      momentum=0.0, scale=1.0, radius=1.0, edge=0.25):
    if kind == "gaussian":
        vals = np.exp(-_centered_r2(grid, center, width)) * np.exp(1j * phase)
    elif kind == "modulated_gaussian":
        k = np.broadcast_to(np.asarray(momentum, dtype=float), (grid.d,))
        ph = sum(k[i] * x for i, x in enumerate(grid.coords()))
        vals = np.exp(-_centered_r2(grid, center, width)) * np.exp(1j * (ph + phase))
    elif kind == "bump":
        vals = bump(np.sqrt(_centered_r2(grid, center, scale))) * np.exp(1j * phase)
    elif kind == "smoothed_indicator":
        rr = np.sqrt(_centered_r2(grid, center))
        vals = 0.5 * erfc((rr - radius) / edge) * np.exp(1j * phase)
    else:
        raise ConfigError(f"unknown profile {kind!r}")
    return amplitude * vals


PROFILES = ("gaussian", "modulated_gaussian", "bump", "smoothed_indicator")


def outside_mass_fraction(grid, fn):
    """Share of mass of ``fn(grid)`` lying outside the box, measured on a box twice as wide."""
    ext = Grid(grid.d, grid.N, 2 * grid.L)
    vals = fn(ext)
    dens = np.abs(vals) ** 2
    total = dens.sum()
    if total == 0:
        return 0.0
    outside = np.zeros(ext.shape, dtype=bool)
    for x in ext.coords():
        outside = outside | (np.abs(x) >= grid.L)
    return float(dens[outside].sum() / total)


def sample_profile(grid, kind, check=True, **params):
    """Sample a named analytic profile.

    Profiles: ``gaussian`` (amplitude * exp(-|x-c|^2/width^2 + i phase)),
    ``modulated_gaussian`` (adds exp(i momentum.x)), ``bump`` (the plateau
    bump scaled by ``scale``), ``smoothed_indicator`` (erfc-smoothed ball of
    ``radius`` with edge ``edge``).
    """
    if check:
        frac = outside_mass_fraction(grid, lambda g: _evaluate_profile(g, kind, **params))
        if frac > OVERFLOW_TOL:
            raise TruncationOverflowError(
                f"profile {kind} has mass fraction {frac:.3e} outside the box |x| < {grid.L}",
                outside_mass=frac)
    vals = _evaluate_profile(grid, kind, **params)
    return Field(grid, vals, "x", {"profile": {"kind": kind, **_jsonable(params)}})


def parse_profile(text):
    """Parse ``"gaussian:width=1,amplitude=0.05"`` into (kind, params)."""
    kind, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        if "/" in val:
            params[key.strip()] = [float(v) for v in val.split("/")]
        else:
            params[key.strip()] = float(val)
    if kind not in PROFILES:
        raise ConfigError(f"unknown profile {kind!r}; choose from {PROFILES}")
    return kind, params


def _jsonable(params):
    out = {}
    for k, v in params.items():
        out[k] = np.asarray(v).tolist()
    return out


# ---------------------------------------------------------------- interpolation and scaling

def _interp_matrix(grid, pts):
    """Rows evaluate the trigonometric interpolant of samples on ``grid`` at ``pts`` (one axis)."""
    k = grid.freqs()
    N = grid.N
    E = np.exp(1j * np.outer(pts + grid.L, k)) / N
    nyq = N // 2
    E[:, nyq] = np.cos(k[nyq] * (pts + grid.L)) / N
    return E


def spectral_interpolate(f, points):
    """Evaluate the periodic band-limited interpolant of ``f`` on a tensor grid.

    ``points`` is one 1-d array per axis (or one array reused on every axis).
    """
    g = f.grid
    if isinstance(points, np.ndarray) and points.ndim == 1:
        points = [points] * g.d
    coef = np.fft.fftn(f.values)
    for ax in range(g.d):
        E = _interp_matrix(g, np.asarray(points[ax], dtype=float))
        coef = np.moveaxis(np.tensordot(E, coef, axes=([1], [ax])), 0, ax)
    return coef


def rescale(f, lam, p):
    """x -> lam^(2/p) f(lam x) on the same grid (spectral interpolation off-lattice)."""
    if not lam > 0:
        raise ConfigError(f"scale must be positive, got {lam}")
    if lam == 1:
        return f.with_values(f.values.copy())
    g = f.grid
    total = mass(f)
    if total > 0:
        # samples of f beyond |y| = lam * L are dropped by the rescaled box
        inside = np.ones(g.shape, dtype=bool)
        for x in g.coords():
            inside = inside & (np.abs(x) < lam * g.L)
        lost = np.sum(np.abs(f.values[~inside]) ** 2) * g.cell / total
        if lost > OVERFLOW_TOL:
            raise TruncationOverflowError(f"rescaled profile leaves the box (lost mass fraction {lost:.3e})",
                                          outside_mass=float(lost))
    pts = lam * g.axis()
    vals = spectral_interpolate(f, pts)
    mask = np.ones(g.shape, dtype=bool)
    for ax in range(g.d):
        shp = [1] * g.d
        shp[ax] = g.N
        mask = mask & (np.abs(pts) < g.L).reshape(shp)
    vals = np.where(mask, vals, 0.0) * lam ** (2 / p)
    return f.with_values(vals, rescaled={"lambda": lam, "p": p})


# ---------------------------------------------------------------- persistence

MAGIC = b"RWFIELD\0"
VERSION = 1
_HEADER = struct.Struct("<8sIIIBxxxdI")


def write_field(f, path_or_buffer, provenance=None):
    """Binary snapshot: fixed header, JSON metadata, little-endian interleaved re/im doubles."""
    meta = dict(f.meta)
    if provenance:
        meta.update(provenance)
    blob = json.dumps(meta, sort_keys=True, default=_json_default).encode()
    head = _HEADER.pack(MAGIC, VERSION, f.grid.d, f.grid.N, 0 if f.space == "x" else 1, f.grid.L, len(blob))
    data = np.ascontiguousarray(f.values, dtype="<c16").tobytes()
    if isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__"):
        with open(path_or_buffer, "wb") as fh:
            fh.write(head + blob + data)
    else:
        path_or_buffer.write(head + blob + data)


def read_field(path_or_buffer):
    if isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__"):
        with open(path_or_buffer, "rb") as fh:
            raw = fh.read()
    else:
        raw = path_or_buffer.read()
    if len(raw) < _HEADER.size:
        raise ConfigError("field snapshot truncated")
    magic, version, d, N, space, L, mlen = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ConfigError("not a field snapshot (bad magic)")
    if version != VERSION:
        raise ConfigError(f"unsupported snapshot version {version}")
    off = _HEADER.size
    meta = json.loads(raw[off:off + mlen].decode())
    off += mlen
    grid = Grid(d, N, L)
    vals = np.frombuffer(raw, dtype="<c16", count=N ** d, offset=off).reshape(grid.shape)
    return Field(grid, vals.astype(np.complex128), "x" if space == 0 else "k", meta)


def slice_csv(f, axis=0):
    """CSV text of the 1-d slice along ``axis`` through the box center."""
    g = f.grid
    idx = [g.N // 2] * g.d
    idx[axis] = slice(None)
    vals = f.values[tuple(idx)]
    buf = io.StringIO()
    buf.write("x,re,im,abs\n")
    for x, v in zip(g.axis(), vals):
        buf.write(f"{x:.17g},{v.real:.17g},{v.imag:.17g},{abs(v):.17g}\n")
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")
