"""Exponent bookkeeping for the mass-subcritical power NLS above the Strauss exponent.

Every other module takes its exponents from :func:`derive_exponents`.
"""
from dataclasses import asdict, dataclass, field
import math

from .errors import ExponentInfeasibleError, NotApplicableError, RandwaveError, UnsupportedDimensionError

SUPPORTED_DIMS = (1, 2, 3)
IDENTITY_TOL = 1e-12


def _check_dim(d):
    if d not in SUPPORTED_DIMS:
        raise UnsupportedDimensionError(f"dimension {d!r} not supported (need 1, 2 or 3)")


def strauss_exponent(d):
    """Strauss exponent p0(d) = (2 - d + sqrt(d^2 + 12 d + 4)) / (2 d)."""
    _check_dim(d)
    return (2 - d + math.sqrt(d * d + 12 * d + 4)) / (2 * d)


def scaling_index(d, q, r):
    """s(q, r) = d/2 - (2/q + d/r); infinite exponents allowed."""
    return d / 2 - (2 / q + d / r)


def a_interval(d, p, q):
    """Open interval for 1/a that makes (a, b) admissible and (alpha, beta) dual admissible."""
    if d == 1:
        return max(0.75 - p / q, 0.0), min(1 - p / q, 0.25)
    return max(0.5 - p / q, 0.0), min(1 - p / q, 0.5)


@dataclass(frozen=True)
class ExponentSet:
    d: int
    p: float
    p0: float
    r: float
    q: float
    qbar: float
    s_c: float
    eps0: float
    rho0: float
    a: float
    b: float
    alpha: float
    beta: float

    def as_dict(self):
        return asdict(self)


def derive_exponents(d, p, a_fraction=0.5, inv_a=None):
    """Build the full exponent set for ``(d, p)``.

    ``a_fraction`` in (0, 1) places 1/a inside its admissible open interval
    (0 is the lower endpoint, 1 the upper).  ``inv_a`` overrides it with an
    explicit value of 1/a, which must lie strictly inside the interval.
    """
    _check_dim(d)
    p = float(p)
    p0 = strauss_exponent(d)
    if not p > p0:
        raise ExponentInfeasibleError(f"p={p} must exceed the Strauss exponent p0({d})={p0:.15g}")
    if not p < 4 / d:
        raise ExponentInfeasibleError(f"p={p} must be below the mass-critical power 4/d={4 / d:.15g}")

    r = p + 2
    q = 2 * p * (p + 2) / (4 - p * (d - 2))
    qbar = 2 * p * (p + 2) / (d * p * p - (4 - p * (d - 2)))
    s_c = d / 2 - 2 / p
    eps0 = (d / 2 - d / r) - 1 / q
    rho0 = d * p / (d * p - 2)

    lo, hi = a_interval(d, p, q)
    if not lo < hi:
        raise RandwaveError(f"internal consistency failure: empty 1/a interval ({lo}, {hi}) at d={d}, p={p}")
    if inv_a is None:
        if not 0 < a_fraction < 1:
            raise ExponentInfeasibleError(f"a_fraction={a_fraction} must lie in (0, 1)")
        inv_a = lo + a_fraction * (hi - lo)
    elif not lo < inv_a < hi:
        raise ExponentInfeasibleError(f"1/a={inv_a} outside the open interval ({lo}, {hi})")
    a = 1 / inv_a
    # s(a, b) = 0
    b = 1 / (0.5 - 2 * inv_a / d)
    alpha = 1 / (p / q + inv_a)
    beta = 1 / (p / r + 1 / b)
    return ExponentSet(d=d, p=p, p0=p0, r=r, q=q, qbar=qbar, s_c=s_c, eps0=eps0, rho0=rho0,
                       a=a, b=b, alpha=alpha, beta=beta)


@dataclass
class Check:
    name: str
    residual: float
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def max_residual(self):
        vals = [c.residual for c in self.checks if math.isfinite(c.residual)]
        return max(vals) if vals else 0.0

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_exponents(es, tol=IDENTITY_TOL):
    """Check every identity and inequality of an exponent set; report residuals."""
    d, p = es.d, es.p
    rep = ValidationReport()

    def eq(name, lhs, rhs, scale=1.0):
        res = abs(lhs - rhs) / max(1.0, abs(scale))
        rep.checks.append(Check(name, res, bool(res <= tol)))

    def ineq(name, ok, detail=""):
        rep.checks.append(Check(name, 0.0 if ok else math.inf, bool(ok), detail))

    p0 = (2 - d + math.sqrt(d * d + 12 * d + 4)) / (2 * d)
    eq("strauss", es.p0, p0)
    eq("r", es.r, p + 2, es.r)
    eq("q_formula", es.q, 2 * p * (p + 2) / (4 - p * (d - 2)), es.q)
    eq("qbar_formula", es.qbar, 2 * p * (p + 2) / (d * p * p - (4 - p * (d - 2))), es.qbar)
    eq("foschi_scaling", 1 / es.q + 1 / es.qbar, d / 2 - d / es.r)
    eq("critical_scaling", scaling_index(d, es.q, es.r), es.s_c)
    eq("s_c", es.s_c, d / 2 - 2 / p)
    eq("eps0_definition", es.eps0, (d / 2 - d / es.r) - 1 / es.q)
    eq("eps0_closed_form", es.eps0, (d * p * p + p * (d - 2) - 4) / (2 * p * (p + 2)))
    eq("rho0", es.rho0, d * p / (d * p - 2), es.rho0)
    eq("admissible_ab", scaling_index(d, es.a, es.b), 0.0)
    eq("alpha_relation", 1 / es.alpha, p / es.q + 1 / es.a)
    eq("beta_relation", 1 / es.beta, p / es.r + 1 / es.b)
    alpha_d = 1 / (1 - 1 / es.alpha)
    beta_d = 1 / (1 - 1 / es.beta)
    eq("dual_admissible", scaling_index(d, alpha_d, beta_d), 0.0)
    eq("r_dual", 1 - 1 / es.r, (p + 1) / es.r)
    eq("qbar_dual", 1 - 1 / es.qbar, (p + 1) / es.q)

    ineq("p_range", es.p0 < p < 4 / d, f"{es.p0} < {p} < {4 / d}")
    ineq("q_range", max(1.0, p) < es.q < math.inf)
    ineq("qbar_range", 1 < es.qbar < math.inf)
    ineq("eps0_positive", es.eps0 > 0)
    lo, hi = a_interval(d, p, es.q)
    ineq("a_interval", lo < 1 / es.a < hi, f"{lo} < {1 / es.a} < {hi}")
    ineq("alpha_range", 1 < es.alpha < (4 / 3 if d == 1 else 2))
    ineq("b_range", 2 <= es.b < math.inf)
    return rep


def masaki_feasible(es):
    """Whether (q, r) meets both Fourier-restriction constraints (d = 3 only)."""
    d = es.d
    if d < 3:
        raise NotApplicableError(f"Fourier-Lebesgue Strichartz constraints are stated for d >= 3, got d={d}")
    iq, ir = 1 / es.q, 1 / es.r
    c = (d + 1) / (2 * (d + 3))
    first = iq <= d / (d - 2) * ir
    second = iq < c - (d + 1) / 2 * (ir - c)
    return bool(first and second)


def exponents_json(es):
    """Flat mapping with the keys used by the ``exponents`` subcommand."""
    out = {k: getattr(es, k) for k in ("d", "p", "p0", "r", "q", "qbar", "s_c", "eps0", "rho0",
                                       "a", "b", "alpha", "beta")}
    try:
        out["feasible_masaki"] = masaki_feasible(es)
    except NotApplicableError:
        out["feasible_masaki"] = None
    return out
