"""Special functions and the ultraspherical quadrature used throughout the package.

Zonal integrals on S^d reduce to integrals on [-1, 1] against the probability
density c_d (1 - z^2)^(d/2 - 1).  Everything here works with that measure, written
``nu_d`` in the docstrings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special as sp

from .errors import CapacityError, DomainError, NumericalError

MAX_ORDER = 2048
DEFAULT_ORDER = 256


def _check_positive(x, name="x"):
    x = float(x)
    if not (x > 0.0) or not math.isfinite(x):
        raise DomainError(f"{name} must be positive and finite, got {x!r}")
    return x


def log_gamma(x):
    """log Gamma(x) for x > 0."""
    return float(sp.gammaln(_check_positive(x)))


def digamma(x):
    """psi(x) = Gamma'(x) / Gamma(x) for x > 0."""
    return float(sp.digamma(_check_positive(x)))


def lower_incomplete_gamma_regularized(a, x):
    """P(a, x) = gamma(a, x) / Gamma(a)."""
    a = _check_positive(a, "a")
    x = float(x)
    if not (x >= 0.0):
        raise DomainError(f"x must be nonnegative, got {x!r}")
    return float(sp.gammainc(a, x))


def _check_dim(d):
    if int(d) != d or d < 1:
        raise DomainError(f"dimension d must be a positive integer, got {d!r}")
    return int(d)


def recurrence_coefficients(d, n_max):
    """Coefficients b_1..b_{n_max} of z p_n = b_{n+1} p_{n+1} + b_n p_{n-1}.

    The p_n are orthonormal for nu_d.  Entry 0 of the returned array is unused.
    """
    d = _check_dim(d)
    b = np.zeros(n_max + 1)
    for n in range(1, n_max + 1):
        if d == 1:
            b[n] = math.sqrt(0.5) if n == 1 else 0.5
        else:
            b[n] = math.sqrt(n * (n + d - 2) / ((2 * n + d - 3) * (2 * n + d - 1)))
    return b


def gegenbauer_basis(d, L, z, derivatives=0):
    """Orthonormal Gegenbauer polynomials p_0..p_L at the points ``z``.

    Returns an array of shape (derivatives + 1, L + 1, len(z)); slice ``[k]`` holds
    the k-th derivative.  For d = 1 these are sqrt(2) T_n (n >= 1), the cosine modes.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    b = recurrence_coefficients(d, L + 1)
    out = np.zeros((derivatives + 1, L + 1, z.size))
    out[0, 0] = 1.0
    if L >= 1:
        # p_1 = z / b_1; derivatives follow by differentiating the recurrence
        for n in range(L):
            for k in range(derivatives + 1):
                prev = out[k, n - 1] if n >= 1 else 0.0
                lower = k * out[k - 1, n] if k >= 1 else 0.0
                out[k, n + 1] = (z * out[k, n] + lower - b[n] * prev) / b[n + 1]
    return out


def gegenbauer_eval(d, ell, z):
    """Degree ``ell`` orthonormal Gegenbauer polynomial (parameter (d-1)/2) at z."""
    ell = int(ell)
    if ell < 0:
        raise DomainError("degree must be nonnegative")
    z_arr = np.asarray(z, dtype=float)
    if np.any(np.abs(z_arr) > 1.0):
        raise DomainError("z must lie in [-1, 1]")
    vals = gegenbauer_basis(d, ell, z_arr.ravel())[0, ell]
    return float(vals[0]) if z_arr.ndim == 0 else vals.reshape(z_arr.shape)


@dataclass(frozen=True)
class QuadratureRule:
    d: int
    N: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values):
        return float(np.dot(self.weights, values))


@lru_cache(maxsize=128)
def _rule_arrays(d, N):
    alpha = d / 2.0 - 1.0
    x, w = sp.roots_jacobi(N, alpha, alpha)
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_jacobi_rule(d, N=DEFAULT_ORDER):
    """N-point Gauss rule for nu_d; exact up to degree 2N - 1.

    Rules are cached per (d, N); the cached arrays are read-only.
    """
    d = _check_dim(d)
    N = int(N)
    if N < 1:
        raise DomainError("quadrature order must be at least 1")
    if N > MAX_ORDER:
        raise CapacityError(f"quadrature order {N} exceeds the cap {MAX_ORDER}")
    x, w = _rule_arrays(d, N)
    return QuadratureRule(d, N, x, w)


def beta_moment(d, k):
    """Exact  int z^k dnu_d  (zero for odd k)."""
    if k % 2:
        return 0.0
    # prod_{j<k/2} (2j+1)/(d+1+2j)
    out = 1.0
    for j in range(k // 2):
        out *= (2 * j + 1) / (d + 1 + 2 * j)
    return out


def integrate_adaptive(d, func, N=DEFAULT_ORDER, tol=1e-10):
    """Integrate ``func(z)`` against nu_d, doubling N until two passes agree."""
    prev = gauss_jacobi_rule(d, N).integrate(func(gauss_jacobi_rule(d, N).nodes))
    while True:
        N *= 2
        if N > MAX_ORDER:
            raise NumericalError("adaptive quadrature did not settle below the order cap")
        rule = gauss_jacobi_rule(d, N)
        cur = rule.integrate(func(rule.nodes))
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
