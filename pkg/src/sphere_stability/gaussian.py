"""Hermite-mode calculus for the Gaussian interpolation inequalities.

Functions live on the real line with the standard Gaussian measure and are expanded
in normalized probabilists' Hermite polynomials h_k = He_k / sqrt(k!), so that
||f||_2^2 = sum c_k^2 and ||f'||_2^2 = sum k c_k^2.  The Ornstein-Uhlenbeck
semigroup acts as c_k -> exp(-k t) c_k.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import hermite_e as He
from scipy.special import gammaln

from .errors import DomainError, NumericalError

TAIL_RADIUS = 14.0      # e^{-x^2/2} beyond this is below 1e-42
NORM_TOL = 1e-12
A1_TOL = 1e-12


@lru_cache(maxsize=32)
def _gauss_hermite(N):
    x, w = He.hermegauss(N)
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _scale(K):
    # h_k = He_k / sqrt(k!)
    return np.exp(-0.5 * gammaln(np.arange(K + 1) + 1.0))


@dataclass(frozen=True, eq=False)
class HermiteFn:
    """f = sum_k c_k h_k on (R, Gaussian measure); dimension fixed to 1."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float).ravel()
        if c.size == 0 or not np.all(np.isfinite(c)):
            raise DomainError("coefficients must be a nonempty finite array")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def K(self):
        return self.coefficients.size - 1

    @property
    def a(self):
        """Mode energies a_k = ||f_k||_2^2."""
        return self.coefficients ** 2

    def __call__(self, x):
        return He.hermeval(np.asarray(x, dtype=float), self.coefficients * _scale(self.K))

    def norm2_sq(self):
        return float(self.a.sum())

    def grad_norm_sq(self):
        return float(np.dot(np.arange(self.K + 1), self.a))

    def norm_p(self, p):
        return norm_p(self, p)

    @classmethod
    def from_callable(cls, func, K, N=None):
        """Project ``func`` onto h_0..h_K with an N-point Gauss-Hermite rule."""
        N = N or 2 * K + 2
        x, w = _gauss_hermite(N)
        basis = He.hermevander(x, K) * _scale(K)
        return cls(basis.T @ (w * func(x)))

    def to_dict(self):
        return {"dimension": 1, "coefficients": [float(c) for c in self.coefficients]}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _tanh_sinh_once(func, a, b, h):
    t = np.arange(-4.0, 4.0 + 0.5 * h, h)
    u = 0.5 * math.pi * np.sinh(t)
    keep = np.abs(u) < 300.0
    t, u = t[keep], u[keep]
    # distances to the endpoints without cancellation
    left = (b - a) / (1.0 + np.exp(-2.0 * u))
    right = (b - a) / (1.0 + np.exp(2.0 * u))
    x = np.where(u < 0.0, a + left, b - right)
    w = 0.5 * (b - a) * 0.5 * math.pi * np.cosh(t) / np.cosh(u) ** 2
    return h * float(np.dot(w, func(x)))


def _tanh_sinh(func, a, b, tol=NORM_TOL, floor=0.0):
    """Double-exponential quadrature on [a, b]; robust to |x - a|^p type endpoint behavior."""
    h = 0.25
    prev = _tanh_sinh_once(func, a, b, h)
    for _ in range(8):
        h *= 0.5
        cur = _tanh_sinh_once(func, a, b, h)
        if abs(cur - prev) <= tol * abs(cur) + floor:
            return cur
        prev = cur
    raise NumericalError("tanh-sinh quadrature did not converge")


def norm_p(f, p):
    """(int |f|^p dgamma)^(1/p), split at the real zeros of f so |f|^p is smooth on pieces."""
    p = float(p)
    if not p >= 1.0:
        raise DomainError(f"p must be at least 1, got {p}")
    if p == 2.0:
        return math.sqrt(f.norm2_sq())
    c = f.coefficients * _scale(f.K)
    top = np.max(np.nonzero(c)[0]) if np.any(c) else 0
    cuts = [-TAIL_RADIUS, TAIL_RADIUS]
    if top >= 1:
        r = He.hermeroots(c[: top + 1])
        # near-real complex pairs mark near-zeros of f; cutting there clusters nodes
        r = r[np.abs(r.imag) < 1.0].real
        cuts += [float(v) for v in r if abs(v) < TAIL_RADIUS]
    cuts = sorted(set(cuts))
    dens = 1.0 / math.sqrt(2.0 * math.pi)
    integrand = lambda x: np.abs(f(x)) ** p * np.exp(-0.5 * x * x) * dens
    # pieces that are negligible against the whole integral only need absolute accuracy
    floor = 1e-3 * NORM_TOL * max(f.norm2_sq(), 1e-300) ** (p / 2.0)
    total = sum(_tanh_sinh(integrand, a, b, floor=floor) for a, b in zip(cuts[:-1], cuts[1:]))
    if not math.isfinite(total):
        raise NumericalError("Gaussian L^p quadrature returned a nonfinite value")
    return total ** (1.0 / p)


def ou_evolve(f, t):
    """Ornstein-Uhlenbeck semigroup at time t: c_k -> exp(-k t) c_k."""
    t = float(t)
    if not t >= 0.0:
        raise DomainError(f"t must be nonnegative, got {t}")
    return HermiteFn(f.coefficients * np.exp(-t * np.arange(f.K + 1)))


def nelson_time(p):
    """t_* with exp(-2 t_*) = p - 1; infinite at p = 1."""
    p = float(p)
    if not 1.0 <= p < 2.0:
        raise DomainError(f"nelson_time needs p in [1, 2), got {p}")
    if p == 1.0:
        return math.inf
    return -0.5 * math.log(p - 1.0)


def mode_constant(p, k):
    """kappa_k(p) = (1 - (p-1)^k) / (k (2-p)), written to stay accurate as p -> 2."""
    p = float(p)
    if not 1.0 <= p < 2.0:
        raise DomainError(f"mode_constant needs p in [1, 2), got {p}")
    if int(k) != k or k < 1:
        raise DomainError(f"k must be a positive integer, got {k}")
    if p == 1.0:
        return 1.0 / k
    h = 2.0 - p
    return -math.expm1(k * math.log1p(-h)) / (k * h)


def gross_factor(k, t):
    """(1 - exp(-2kt))/k, nonincreasing in k for t >= 0."""
    return -math.expm1(-2.0 * k * t) / k


@dataclass
class GaussianAudit:
    p: float
    grad_sq: float
    entropy_gap: float          # (||f||_2^2 - ||f||_p^2)/(2 - p)
    deficit: float              # grad_sq - entropy_gap
    improved_rhs: float         # ((2 - p)/2) grad_sq
    margin: float
    base_margin: float          # grad_sq - entropy_gap (the unimproved inequality)
    mode_margin: float          # sum kappa_k k a_k - entropy_gap
    gross_margin: float
    passed: bool

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def verify_theorem_b1(f, p, tol=1e-9):
    """Improved Gaussian interpolation under the centering condition a_1 = 0."""
    p = float(p)
    if not 1.0 <= p < 2.0:
        raise DomainError(f"p must lie in [1, 2), got {p}")
    if f.K >= 1 and abs(f.coefficients[1]) > A1_TOL * max(1.0, math.sqrt(f.norm2_sq())):
        raise DomainError("verify_theorem_b1 needs a_1 = 0 (no first Hermite mode)")
    g = f.grad_norm_sq()
    gap = (f.norm2_sq() - norm_p(f, p) ** 2) / (2.0 - p)
    deficit = g - gap
    rhs = 0.5 * (2.0 - p) * g
    modes = sum(mode_constant(p, k) * k * a for k, a in enumerate(f.a) if k >= 1)
    ts = nelson_time(p)
    u = ou_evolve(f, ts) if math.isfinite(ts) else HermiteFn(f.coefficients[:1])
    gross = 0.5 * -math.expm1(-4.0 * ts) * g - (f.norm2_sq() - u.norm2_sq())
    margin = deficit - rhs
    return GaussianAudit(p, g, gap, deficit, rhs, margin, deficit, modes - gap, gross, margin >= -tol)


def hypercontractivity_audit(f, p):
    """(||u(t_*)||_2, ||f||_p, margin) with margin = ||f||_p - ||u(t_*)||_2."""
    ts = nelson_time(p)
    u = ou_evolve(f, ts) if math.isfinite(ts) else HermiteFn(f.coefficients[:1])
    lhs = math.sqrt(u.norm2_sq())
    rhs = norm_p(f, p)
    return lhs, rhs, rhs - lhs


def random_hermite(rng, K=8, a1_zero=True, decay=1.0):
    """Random coefficients with algebraic decay; the first mode removed if requested."""
    c = rng.standard_normal(K + 1) / (1.0 + np.arange(K + 1)) ** decay
    c[0] = rng.uniform(-1.0, 2.0)
    if a1_zero and K >= 1:
        c[1] = 0.0
    return HermiteFn(c)


def random_positive_hermite(rng, K=4):
    """f = g^2 + c with a random polynomial g of degree K and c > 0 (degree 2K)."""
    g = HermiteFn(rng.standard_normal(K + 1) / (1.0 + np.arange(K + 1)))
    shift = rng.uniform(0.05, 1.0)
    return HermiteFn.from_callable(lambda x: g(x) ** 2 + shift, 2 * K)


def mode_table(p, k_max=20):
    """Rows (k, kappa_k(p))."""
    return [(k, mode_constant(p, k)) for k in range(1, k_max + 1)]
