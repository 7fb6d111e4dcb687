"""Closed-form spectral constants for the improved interpolation inequalities on S^d."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sp

from .errors import DomainError

P_MAX_DEFAULT = 50.0
LOG_BRANCH_RADIUS = 1e-8
LOG1P_MAX_J = 4096      # above this gamma_j falls back to log-gamma differences


@dataclass(frozen=True)
class Params:
    """Dimension ``d`` and exponent ``p`` with the derived critical exponents."""

    d: int
    p: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"d must be a positive integer, got {self.d!r}")
        object.__setattr__(self, "d", int(self.d))
        p = float(self.p)
        object.__setattr__(self, "p", p)
        if not (1.0 <= p < self.two_star):
            raise DomainError(f"p={p} outside [1, 2*) with 2*={self.two_star} for d={self.d}")

    @property
    def two_star(self):
        return 2.0 * self.d / (self.d - 2) if self.d >= 3 else math.inf

    @property
    def two_sharp(self):
        d = self.d
        return (2.0 * d * d + 1.0) / (d - 1) ** 2 if d >= 2 else math.inf

    @property
    def is_log(self):
        return abs(self.p - 2.0) < LOG_BRANCH_RADIUS


def critical_exponent(d):
    return 2.0 * d / (d - 2) if d >= 3 else math.inf


def bakry_emery_exponent(d):
    return (2.0 * d * d + 1.0) / (d - 1) ** 2 if d >= 2 else math.inf


def _admissible_x(d, x):
    lo = (d - 2) / 2.0 if d >= 2 else 0.0
    if not (lo < x <= d):
        raise DomainError(f"x={x} outside the admissible interval ({lo}, {d}]")


def gamma_ratio(params, j, x):
    """gamma_j(x) = Gamma(x)Gamma(j+d-x) / (Gamma(d-x)Gamma(x+j)).

    Equals prod_{i<j} (i+d-x)/(i+x); its logarithm is summed as log1p terms, which
    keeps full relative accuracy where differences of large log-gammas would not.
    At x = d the ratio vanishes (Gamma(d-x) has a pole).
    """
    d = params.d
    _admissible_x(d, x)
    if j < 1:
        raise DomainError("j must be at least 1")
    if x == d:
        return 0.0
    if j > LOG1P_MAX_J:
        lg = sp.gammaln
        return float(np.exp(lg(x) + lg(j + d - x) - lg(d - x) - lg(x + j)))
    i = np.arange(j, dtype=float)
    return float(np.exp(math.fsum(np.log1p((d - 2.0 * x) / (x + i)))))


def zeta_j(params, j):
    """zeta_j(p) = (gamma_j(d/p) - 1) / (p - 2).  Not defined at p = 2: use eta_j."""
    p = params.p
    if params.is_log:
        raise DomainError("zeta_j is undefined at p = 2; use eta_j for the logarithmic case")
    return (gamma_ratio(params, j, params.d / p) - 1.0) / (p - 2.0)


def eta_j(d, j):
    """eta_j = psi(j + d/2) - psi(d/2)."""
    if j < 1:
        raise DomainError("j must be at least 1")
    return float(sp.digamma(j + d / 2.0) - sp.digamma(d / 2.0))


def lambda_j(d, j):
    """Eigenvalue j(j+d-1) of -Laplacian on S^d (exact integer)."""
    if j < 0:
        raise DomainError("j must be nonnegative")
    return int(j) * (int(j) + int(d) - 1)


def xi_family(params, j, x):
    """Return (xi_j, xi_star_j, h_j) at x for j >= 2."""
    if j < 2:
        raise DomainError("xi_family needs j >= 2")
    d = params.d
    g = gamma_ratio(params, j, x)
    xi = abs(g - 1.0) / (j * (j + d - 1))
    h = j * (j + d - 1) * (j + d - x) / ((j + 1) * (j + d) * (j + x))
    xi_star = abs(d - 2 * x) / (j * (j + d) * (2 * x - d + 2) + d * x)
    return xi, xi_star, h


def improved_constant(params, k=1):
    """C_{d,p,k} = 1 - d zeta_{k+1}/((k+1)(k+d)).

    At p = 2 the limit value (d/2) eta_{k+1} replaces zeta_{k+1}, which gives
    C_{d,2,1} = 2/(d+2).
    """
    if k < 1:
        raise DomainError("k must be at least 1")
    d = params.d
    if params.is_log:
        z = (d / 2.0) * eta_j(d, k + 1)
    else:
        z = zeta_j(params, k + 1)
    return 1.0 - d * z / ((k + 1) * (k + d))


def improved_constant_k1(d, p):
    """Closed form (2d - p(d-2)) / (2(d+p)) of C_{d,p,1}; equals 2/(d+2) at p = 2."""
    return (2.0 * d - p * (d - 2.0)) / (2.0 * (d + p))


def zeta_over_lambda_sup(params, j_min=3, j_max=200):
    """max over j_min <= j <= j_max of zeta_j/lambda_j together with the maximizing j."""
    vals = [(zeta_j(params, j) / lambda_j(params.d, j), j) for j in range(j_min, j_max + 1)]
    return max(vals)


def p_grid(d, n=10, p_max=P_MAX_DEFAULT, include_log=True):
    """Sample exponents spanning (1, 2*) for sweeps; p_max caps the range when 2* is infinite."""
    top = min(critical_exponent(d), p_max)
    grid = list(1.0 + (top - 1.0) * (np.arange(1, n + 1) / (n + 1)))
    if include_log and 2.0 not in grid:
        grid.append(2.0)
    return sorted(float(p) for p in grid)
