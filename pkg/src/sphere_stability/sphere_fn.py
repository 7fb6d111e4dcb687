"""Zonal functions on S^d: norms, entropies, deficits and spectral projections.

A :class:`ZonalFn` is a polynomial profile u(z), z = x . nu, stored by its
coefficients in the orthonormal Gegenbauer basis.  Grid values are derived on demand
from the coefficients, so the two representations cannot drift apart.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize
from scipy import special as sp

from . import special_fn as sf
from . import spectral
from .errors import DomainError, NumericalError

DEFAULT_L = 64
MAX_L = 1024
TAIL_TOL = 1e-10
NORM_TOL = 1e-10


@lru_cache(maxsize=64)
def _basis_at_nodes(d, L, N, derivatives=0):
    rule = sf.gauss_jacobi_rule(d, N)
    B = sf.gegenbauer_basis(d, L, rule.nodes, derivatives)
    B.setflags(write=False)
    return B


def _eigenvalues(d, L):
    ell = np.arange(L + 1, dtype=float)
    return ell * (ell + d - 1)


@dataclass(frozen=True, eq=False)
class ZonalFn:
    """Immutable zonal profile on S^d given by Gegenbauer coefficients c_0..c_L."""

    d: int
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = int(self.d)
        if d != self.d or d < 1:
            raise DomainError(f"d must be a positive integer, got {self.d!r}")
        c = np.array(self.coefficients, dtype=float).ravel()
        if c.size == 0:
            raise DomainError("a zonal function needs at least one coefficient")
        if not np.all(np.isfinite(c)):
            raise DomainError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "coefficients", c)

    @property
    def L(self):
        return self.coefficients.size - 1

    # construction ---------------------------------------------------------
    @classmethod
    def from_callable(cls, d, func, L=None, tol=TAIL_TOL):
        """Project ``func`` onto degrees <= L.

        With ``L=None`` the degree starts at 64 and doubles until the energy in the
        top quarter of the ladder drops below ``tol`` (relative to the total).
        """
        adaptive = L is None
        L = DEFAULT_L if adaptive else int(L)
        while True:
            N = 2 * L + 2
            rule = sf.gauss_jacobi_rule(d, N)
            B = _basis_at_nodes(d, L, N)[0]
            c = B @ (rule.weights * np.asarray(func(rule.nodes), dtype=float))
            if not adaptive:
                return cls(d, c)
            total = float(np.dot(c, c))
            tail = float(np.dot(c[3 * L // 4:], c[3 * L // 4:]))
            if tail <= tol * max(total, 1e-300):
                keep = np.nonzero(np.abs(c) > 1e-17 * math.sqrt(max(total, 1e-300)))[0]
                return cls(d, c[: (keep[-1] + 1 if keep.size else 1)])
            L *= 2
            if L > MAX_L:
                raise NumericalError("coefficient ladder did not converge below the degree cap")

    @classmethod
    def constant(cls, d, value=1.0):
        return cls(d, [value])

    # evaluation -----------------------------------------------------------
    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        B = sf.gegenbauer_basis(self.d, self.L, z.ravel())[0]
        return (self.coefficients @ B).reshape(z.shape)

    def derivative_values(self, z, order=1):
        z = np.asarray(z, dtype=float)
        B = sf.gegenbauer_basis(self.d, self.L, z.ravel(), order)[order]
        return (self.coefficients @ B).reshape(z.shape)

    def values(self, N=None):
        """Values at the nodes of the N-point rule (default: enough for exact squares)."""
        N = N or max(sf.DEFAULT_ORDER, self.L + 1)
        return self.coefficients @ _basis_at_nodes(self.d, self.L, N)[0]

    def grid_min(self, N=None):
        return float(np.min(self.values(N)))

    # algebra ----------------------------------------------------------------
    def _padded(self, other):
        n = max(self.L, other.L) + 1
        a = np.zeros(n)
        b = np.zeros(n)
        a[: self.L + 1] = self.coefficients
        b[: other.L + 1] = other.coefficients
        return a, b

    def __add__(self, other):
        if not isinstance(other, ZonalFn):
            c = self.coefficients.copy()
            c[0] += float(other)
            return ZonalFn(self.d, c)
        if other.d != self.d:
            raise DomainError("dimension mismatch")
        a, b = self._padded(other)
        return ZonalFn(self.d, a + b)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, scalar):
        return ZonalFn(self.d, float(scalar) * self.coefficients)

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def map(self, func, L=None):
        """Pointwise image func(u) re-projected onto the basis."""
        return ZonalFn.from_callable(self.d, lambda z: func(self(z)), L=L)

    # serialization ----------------------------------------------------------
    def to_dict(self):
        return {"d": self.d, "L": self.L, "coefficients": [float(c) for c in self.coefficients]}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {"d", "L", "coefficients"}
        if unknown:
            raise DomainError(f"unknown keys in zonal function record: {sorted(unknown)}")
        coeffs = data["coefficients"]
        if "L" in data and int(data["L"]) != len(coeffs) - 1:
            raise DomainError("L does not match the number of coefficients")
        return cls(int(data["d"]), coeffs)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# integrals and norms ------------------------------------------------------------

def mean(f):
    """Pi_0 F, the average against the uniform probability measure."""
    return float(f.coefficients[0])


def norm2_sq(f):
    return float(np.dot(f.coefficients, f.coefficients))


def _theta_pieces(f, n_grid):
    """Subintervals of [0, pi] on which u(cos theta) keeps one sign."""
    theta = np.linspace(0.0, math.pi, n_grid)
    vals = f(np.cos(theta))
    cuts = [0.0]
    g = lambda t: float(f(np.cos(t)))
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        cuts.append(optimize.brentq(g, theta[i], theta[i + 1], xtol=1e-15))
    cuts.append(math.pi)
    return cuts


def _integrate_theta(f, integrand, n_nodes):
    d = f.d
    norm = float(sp.beta(0.5, d / 2.0))
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    total = 0.0
    cuts = _theta_pieces(f, 8 * f.L + 64)
    for a, b in zip(cuts[:-1], cuts[1:]):
        t = 0.5 * (b - a) * x + 0.5 * (a + b)
        vals = integrand(f(np.cos(t))) * np.sin(t) ** (d - 1)
        total += 0.5 * (b - a) * float(np.dot(w, vals))
    return total / norm


def integrate(f, integrand, tol=NORM_TOL):
    """int integrand(u) dmu for a zonal u.

    Positive profiles use the Gauss-Jacobi rule with doubling; sign-changing ones
    are split at the zeros of u (in the angle variable) so that kinks of |u|^q sit
    on piece boundaries.
    """
    N = max(sf.DEFAULT_ORDER, f.L + 1)
    vals = f.values(N)
    if np.all(vals > 0.0):
        prev = sf.gauss_jacobi_rule(f.d, N).integrate(integrand(vals))
        while True:
            N *= 2
            if N > sf.MAX_ORDER:
                raise NumericalError("norm quadrature did not settle below the order cap")
            cur = sf.gauss_jacobi_rule(f.d, N).integrate(integrand(f.values(N)))
            if abs(cur - prev) <= tol * max(1.0, abs(cur)):
                return cur
            prev = cur
    n = max(64, f.L + 16)
    prev = _integrate_theta(f, integrand, n)
    while True:
        n *= 2
        cur = _integrate_theta(f, integrand, n)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        if n > 4096:
            raise NumericalError("angular quadrature did not settle")
        prev = cur


def norm_p(f, q):
    """(int |u|^q dmu)^(1/q) for q >= 1."""
    q = float(q)
    if not (q >= 1.0):
        raise DomainError(f"q must be at least 1, got {q}")
    if q == 2.0:
        return math.sqrt(norm2_sq(f))
    return integrate(f, lambda u: np.abs(u) ** q) ** (1.0 / q)


def grad_norm_sq(f):
    """||grad F||_2^2 = sum lambda_l c_l^2."""
    return float(np.dot(_eigenvalues(f.d, f.L), f.coefficients ** 2))


def grad_norm_sq_quadrature(f, N=None):
    """Same quantity as int (1 - z^2) u'(z)^2 dnu_d, as an independent check."""
    N = N or max(sf.DEFAULT_ORDER, f.L + 2)
    rule = sf.gauss_jacobi_rule(f.d, N)
    du = f.coefficients @ _basis_at_nodes(f.d, f.L, N, 1)[1]
    return rule.integrate((1.0 - rule.nodes ** 2) * du ** 2)


def tail_energy(f, k):
    """Squared L^2 norm carried by degrees > k."""
    return float(np.dot(f.coefficients[k + 1:], f.coefficients[k + 1:]))


def entropy(f, p):
    """E_p[F] = (||F||_p^2 - ||F||_2^2)/(p - 2); the log entropy when |p - 2| < 1e-8."""
    p = float(p)
    if not (p >= 1.0):
        raise DomainError("p must be at least 1")
    n2 = norm2_sq(f)
    if n2 == 0.0:
        raise DomainError("entropy of the zero function is undefined")
    if abs(p - 2.0) < spectral.LOG_BRANCH_RADIUS:
        return 0.5 * integrate(f, lambda u: sp.xlogy(u * u, u * u / n2))
    return (norm_p(f, p) ** 2 - n2) / (p - 2.0)


def project(f, k):
    """Component of f in degrees 1..k (the mean is excluded)."""
    c = np.zeros(max(f.L, 0) + 1)
    top = min(k, f.L)
    c[1: top + 1] = f.coefficients[1: top + 1]
    return ZonalFn(f.d, c)


def complement(f, k):
    """(Id - Pi_k) f: the mean plus the degrees above k."""
    c = f.coefficients.copy()
    c[1: min(k, f.L) + 1] = 0.0
    return ZonalFn(f.d, c)


def inner(f, g):
    a, b = f._padded(g)
    return float(np.dot(a, b))


# named test functions -------------------------------------------------------

def _axis_scale(d):
    # Y = sqrt((d+1)/d) z and p_1 = sqrt(d+1) z, so Y = p_1/sqrt(d)
    return math.sqrt((d + 1.0) / d)


def y_fn(d):
    return ZonalFn(d, [0.0, 1.0 / math.sqrt(d)])


def y2_fn(d):
    s = _axis_scale(d)
    return ZonalFn.from_callable(d, lambda z: (s * z) ** 2 - 1.0 / d, L=2)


def y3_fn(d):
    s = _axis_scale(d)
    k = 3.0 * (d + 1) / (d * (d + 3))
    return ZonalFn.from_callable(d, lambda z: (s * z) ** 3 - k * s * z, L=3)


def random_highmode(d, seed, k_min=2, L=DEFAULT_L):
    """Mean-free G with degrees in [k_min, L/2] and unit gradient norm."""
    rng = np.random.default_rng(seed)
    top = max(k_min, L // 2)
    c = np.zeros(top + 1)
    c[k_min: top + 1] = rng.standard_normal(top + 1 - k_min)
    g = ZonalFn(d, c)
    return (1.0 / math.sqrt(grad_norm_sq(g))) * g


FAMILIES = ("one_plus_eps_axis", "one_plus_eps_Y", "Y", "Y2", "Y3", "random_highmode")


def test_family(name, d, eps=1.0, seed=0, k_min=2, L=DEFAULT_L):
    """Named test functions; ``eps`` scales the non-constant part."""
    if name == "one_plus_eps_axis":
        return ZonalFn(d, [1.0, eps / math.sqrt(d + 1.0)])
    if name == "one_plus_eps_Y":
        return 1.0 + eps * y_fn(d)
    if name == "Y":
        return eps * y_fn(d)
    if name == "Y2":
        return eps * y2_fn(d)
    if name == "Y3":
        return eps * y3_fn(d)
    if name == "random_highmode":
        return eps * random_highmode(d, seed, k_min, L)
    raise DomainError(f"unknown test family {name!r}; choose from {FAMILIES}")


test_family.__test__ = False


# deficit report ------------------------------------------------------------------

@dataclass
class DeficitReport:
    d: int
    p: float
    entropy: float
    fisher: float
    deficit: float
    norm_p_sq: float
    norm_2_sq: float
    grad_pi1_sq: float
    grad_perp_sq: float
    rhs: dict
    passed: dict
    margins: dict

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def deficit_report(f, p, k_values=(1, 2, 3), tol=1e-9):
    """Deficit i - d e of F together with the right-hand sides of the improved inequalities.

    Keys of ``rhs``:
      * ``improved_k{k}``: C_{d,p,k} ||grad (Id - Pi_k) F||^2 (holds for every F);
      * ``carre_du_champ``: d ||F||_p^2 psi(||grad F||^2 / (d ||F||_p^2)), with the heat-flow
        psi below the Bakry-Emery exponent and psi_{m,p} at the canonical m above it;
      * ``log_sobolev_gamma`` (p = 2): (1/2) gamma i^2 / (gamma i + d ||F||_2^2) with the
        heat-flow gamma.
    """
    from . import carre_du_champ as cdc

    d = f.d
    params = spectral.Params(d, p)
    e = entropy(f, p)
    i = grad_norm_sq(f)
    n2 = norm2_sq(f)
    npp = norm_p(f, p) ** 2
    deficit = i - d * e
    rhs = {}
    for k in k_values:
        rhs[f"improved_k{k}"] = spectral.improved_constant(params, k) * grad_norm_sq(complement(f, k))
    if i > 0.0 and p > 1.0:
        if p < params.two_sharp:
            rhs["carre_du_champ"] = d * npp * cdc.psi(i / (d * npp), d, p)
        elif p > 2.0:
            pack = cdc.CdcParams.canonical(d, p)
            rhs["carre_du_champ"] = d * npp * cdc.psi_mp(i / (d * npp), pack)
    else:
        rhs["carre_du_champ"] = 0.0
    if params.is_log:
        g = cdc.gamma_heat(d, 2.0)
        rhs["log_sobolev_gamma"] = 0.5 * g * i * i / (g * i + d * n2) if i > 0 else 0.0
    margins = {"deficit": deficit}
    margins.update({k: deficit - v for k, v in rhs.items()})
    passed = {k: v >= -tol for k, v in margins.items()}
    return DeficitReport(d, float(p), e, i, deficit, npp, n2, grad_norm_sq(project(f, 1)),
                         grad_norm_sq(complement(f, 1)), rhs, passed, margins)
