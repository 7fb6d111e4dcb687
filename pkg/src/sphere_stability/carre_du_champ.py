"""Improvement functions obtained from entropy methods along diffusion flows.

Notation: ``e`` is the entropy and ``i`` the Fisher information of a function with
||u||_p = 1.  A flow with exponent m (m = 1 is the heat flow) yields i >= d phi(e),
where phi solves

    phi'(s) = 1 + gt * phi(s) / (1 - (p-2) s)^delta,   phi(0) = 0,

with gt = gamma / beta^2.  Every improvement function below is an instance of that
ODE, so they share :class:`ImprovementFunction`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from . import spectral
from .errors import DomainError, NumericalError

BRANCH_SWITCH = 1e-6       # |gamma - (2 - p)| below which the log form of phi is used
S_STAR_CAP = 1e-6           # phi_{m,p} is evaluated on [0, s_star (1 - S_STAR_CAP)]


# scalar constants ------------------------------------------------------------------

def s_star(p):
    return 1.0 / (p - 2.0) if p > 2.0 else math.inf


def gamma_heat(d, p):
    """Heat-flow improvement coefficient ((d-1)/(d+2))^2 (p-1)(2^# - p); (p-1)/3 when d = 1."""
    if p < 1.0:
        raise DomainError("p must be at least 1")
    if d == 1:
        return (p - 1.0) / 3.0
    two_sharp = spectral.bakry_emery_exponent(d)
    if p > two_sharp:
        raise DomainError(f"p={p} exceeds the Bakry-Emery exponent {two_sharp}; use a flow with m != 1")
    return ((d - 1.0) / (d + 2.0)) ** 2 * (p - 1.0) * (two_sharp - p)


def gamma_log_sobolev_stated(d):
    """The p = 2 coefficient in the form (4d-1)(d-1)^2/(d+2)^2 (1/3 when d = 1).

    It differs from ``gamma_heat(d, 2) = (4d-1)/(d+2)^2`` unless d = 2.  Only the latter
    solves the flow ODE, so audits use ``gamma_heat``; this one is reported alongside.
    """
    if d == 1:
        return 1.0 / 3.0
    return (4.0 * d - 1.0) * (d - 1.0) ** 2 / (d + 2.0) ** 2


def p_star(d):
    """Exponent where gamma_heat(d, p) = 2 - p."""
    if d == 1:
        return 1.75
    return (3.0 + d + 2.0 * d * d - 2.0 * math.sqrt(4.0 * d + 4.0 * d * d + d ** 3)) / (d - 1.0) ** 2


def beta_of_m(p, m):
    den = 2.0 - p * (1.0 - m)
    if den == 0.0:
        raise DomainError("2 - p(1 - m) vanishes; beta is undefined")
    return 2.0 / den


def m_of_beta(p, beta):
    return 1.0 + (2.0 / p) * (1.0 / beta - 1.0)


def gamma_beta(d, p, beta):
    """gamma as a function of beta (nonnegativity of the carre du champ remainder)."""
    a = (d - 1.0) / (d + 2.0) * beta * (p - 1.0)
    return d / (d + 2.0) * beta * (p - 1.0) + (1.0 + beta * (p - 2.0)) * (beta - 1.0) - a * a


def gamma_m(d, p, m):
    """gamma in terms of m: -(g0 + g1 d + g2 d^2) / ((d+2)^2 (2 - p(1-m))^2).

    The polynomial is g0 = 4(mp-1)^2, g1 = -4p(m - 3 + p(2-m)(1+m)),
    g2 = (m^2 - 2m + 5)p^2 - 12p + 8.  The overall minus sign makes the value agree with
    :func:`gamma_beta` and with :func:`gamma_heat` at m = 1.
    """
    den = 2.0 - p * (1.0 - m)
    if den == 0.0:
        raise DomainError("2 - p(1 - m) vanishes")
    g0 = 4.0 * (m * p - 1.0) ** 2
    g1 = -4.0 * p * (m - 3.0 + p * (2.0 - m) * (1.0 + m))
    g2 = (m * m - 2.0 * m + 5.0) * p * p - 12.0 * p + 8.0
    return -(g0 + g1 * d + g2 * d * d) / ((d + 2.0) ** 2 * den * den)


def delta_of(p, m=None, beta=None):
    """delta = 1 + (m-1)p^2/(4(p-2)) for p > 2, and 1 for p <= 2."""
    if p <= 2.0:
        return 1.0
    if m is None:
        m = m_of_beta(p, beta)
    return 1.0 + (m - 1.0) * p * p / (4.0 * (p - 2.0))


def delta_of_beta(p, beta):
    """Second form (p - (4-p) beta) / (2 beta (p-2)); must match :func:`delta_of`."""
    return (p - (4.0 - p) * beta) / (2.0 * beta * (p - 2.0))


def zeta_closed_form(d, p, m):
    """Closed-form exponential-rate parameter of phi_{m,p}, quadratic in m over (1-m)."""
    num = ((d + 2.0) ** 2 * p * p * m * m - 2.0 * p * (d + 2.0) * (d * p + 2.0) * m
           + d * d * (5.0 * p * p - 12.0 * p + 8.0) + 4.0 * d * (3.0 - 2.0 * p) * p + 4.0)
    return num / ((1.0 - m) * (d + 2.0) ** 2 * p * p)


def zeta_from_gamma(p, beta, gamma):
    """zeta = 2 gamma / (p beta (1 - beta)), the value for which phi_{m,p} solves the flow ODE."""
    return 2.0 * gamma / (p * beta * (1.0 - beta))


def m_range(d, p, reading="interpolation"):
    """Admissible diffusion exponents for p in (2, 2*).

    Returns (m_minus, m_plus, lo, hi, description) where [lo, hi) is the admissible
    set.  ``reading="interpolation"`` (default) intersects [m_-, m_+] with m < 1 and
    with m >= 2/p when p < 4, or m > 1 - 2/p when p >= 4 (beta finite).  The
    alternative ``reading="literal"`` keeps the whole of [m_-, m_+] for p >= 4.
    """
    params = spectral.Params(d, p)
    if not (2.0 < p < params.two_star):
        raise DomainError(f"m_range needs p in (2, 2*), got p={p}")
    root = math.sqrt(d * (p - 1.0) * (2.0 * d - (d - 2.0) * p))
    m_minus = (d * p + 2.0 - root) / ((d + 2.0) * p)
    m_plus = (d * p + 2.0 + root) / ((d + 2.0) * p)
    if reading == "literal":
        if p < 4.0:
            lo, hi = max(m_minus, 2.0 / p), min(m_plus, 1.0)
            desc = "[m-, m+] with 2/p <= m < 1"
        else:
            lo, hi = m_minus, m_plus
            desc = "[m-, m+]"
    elif reading == "interpolation":
        floor = 2.0 / p if p < 4.0 else 1.0 - 2.0 / p
        lo, hi = max(m_minus, floor), min(m_plus, 1.0)
        desc = "[m-, m+] with 2/p <= m < 1" if p < 4.0 else "[m-, m+] with 1 - 2/p < m < 1"
    else:
        raise DomainError(f"unknown reading {reading!r}")
    return m_minus, m_plus, lo, hi, desc


def canonical_m(p):
    return (p + 2.0) / (2.0 * p)


# the ODE solution -------------------------------------------------------------------

@dataclass(frozen=True)
class ImprovementFunction:
    """phi solving phi' = 1 + gt phi / (1 - (p-2)s)^delta with phi(0) = 0.

    ``excess(s) = phi(s) - s`` is computed as  int_0^s expm1(G(s) - G(z)) dz  with
    G' = gt (1 - (p-2)s)^(-delta), which keeps full relative accuracy as s -> 0.
    """

    p: float
    gt: float
    delta: float

    @property
    def s_star(self):
        return s_star(self.p)

    @property
    def bounded(self):
        """True when phi stays finite at s_star (delta < 1 and p > 2)."""
        return self.p > 2.0 and self.delta < 1.0

    @property
    def s_cap(self):
        return self.s_star * (1.0 - S_STAR_CAP) if self.p > 2.0 else math.inf

    def G(self, s):
        p, gt, dl = self.p, self.gt, self.delta
        s = np.asarray(s, dtype=float)
        if p == 2.0:
            return gt * s
        with np.errstate(divide="ignore"):
            # log(0) = -inf at s_star is intended: expm1 then returns -1
            lw = np.log1p(-(p - 2.0) * s)
        if dl == 1.0:
            return -gt / (p - 2.0) * lw
        return gt / ((p - 2.0) * (dl - 1.0)) * np.expm1((1.0 - dl) * lw)

    def _check_s(self, s):
        if s < 0.0 or (self.p > 2.0 and s > self.s_star):
            raise DomainError(f"s={s} outside [0, s_star={self.s_star})")

    def excess(self, s):
        s = float(s)
        self._check_s(s)
        if s == 0.0:
            return 0.0
        if self.p > 2.0 and s >= self.s_star:
            if not self.bounded:
                return math.inf
            s = self.s_star
        Gs = float(self.G(s))
        val, err = integrate.quad(lambda z: math.expm1(Gs - float(self.G(z))), 0.0, s,
                                  epsabs=0.0, epsrel=1e-12, limit=200)
        return val

    def __call__(self, s):
        return float(s) + self.excess(s)

    def derivative(self, s):
        """phi'(s) from the ODE itself."""
        w = 1.0 - (self.p - 2.0) * s
        return 1.0 + self.gt * self(s) / w ** self.delta

    def phi_at_horizon(self):
        return self(self.s_star) if self.bounded else math.inf

    def inverse(self, t):
        """phi^{-1}(t); equals s_star once t >= phi(s_star) in the bounded case."""
        t = float(t)
        if t < 0.0:
            raise DomainError("t must be nonnegative")
        if t == 0.0:
            return 0.0
        hi = t
        if self.p > 2.0:
            if self.bounded and t >= self.phi_at_horizon():
                return self.s_star
            hi = min(t, self.s_star)
        f = lambda s: self(s) - t
        if f(hi) < 0.0:
            raise NumericalError("phi inversion failed to bracket the root")
        return optimize.brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)

    def psi(self, t):
        """psi(t) = t - phi^{-1}(t), convex with psi(0) = psi'(0) = 0."""
        t = float(t)
        if t < 0.0:
            raise DomainError("t must be nonnegative")
        if t == 0.0:
            return 0.0
        if self.derivative(min(t, self.s_cap)) < 1.5:
            # small t: s = t - excess(s) is a contraction and psi = excess(s) exactly
            s = t
            for _ in range(200):
                ex = self.excess(s)
                s_new = t - ex
                if abs(s_new - s) <= 1e-16 * s:
                    break
                s = s_new
            return self.excess(s)
        s = self.inverse(t)
        if self.bounded and s == self.s_star:
            return t - s
        # t - s = excess(s) + (t - phi(s)); the bracket is the root residual
        ex = self.excess(s)
        return ex + (t - (s + ex))


@lru_cache(maxsize=256)
def heat_improvement(d, p):
    return ImprovementFunction(float(p), gamma_heat(d, p), 1.0)


# heat-flow phi and psi ------------------------------------------------------------

def phi(s, d, p):
    """Heat-flow improvement function in closed form."""
    g = gamma_heat(d, p)
    s = float(s)
    if s < 0.0 or (p > 2.0 and s >= s_star(p)):
        raise DomainError(f"s={s} outside [0, s_star)")
    if p == 2.0:
        return math.expm1(g * s) / g
    if abs(g - (2.0 - p)) < BRANCH_SWITCH:
        a = 2.0 - p
        return (1.0 + a * s) * math.log1p(a * s) / a
    w = 1.0 - (p - 2.0) * s
    return (w - w ** (-g / (p - 2.0))) / (2.0 - p - g)


def psi(t, d, p):
    return heat_improvement(d, float(p)).psi(t)


def psi_log_sobolev(t, gamma):
    """Closed form t - log(1 + gamma t)/gamma of the p = 2 heat-flow psi."""
    return t - math.log1p(gamma * t) / gamma


# the nonlinear-flow parameter pack ----------------------------------------------

@dataclass(frozen=True)
class CdcParams:
    d: int
    p: float
    m: float
    beta: float
    gamma: float
    delta: float
    zeta: float
    s_star: float

    @property
    def kappa(self):
        return self.beta * (self.p - 2.0) + 1.0

    @property
    def gamma_tilde(self):
        return self.gamma / self.beta ** 2

    @classmethod
    def from_m(cls, d, p, m, check_admissible=True, reading="interpolation"):
        if p <= 2.0:
            raise DomainError("the nonlinear-flow pack needs p > 2")
        if check_admissible:
            _, _, lo, hi, desc = m_range(d, p, reading)
            if not (lo <= m < hi or (m == 1.0 and hi == 1.0)):
                raise DomainError(f"m={m} not admissible: {desc} = [{lo}, {hi})")
        beta = beta_of_m(p, m)
        g = gamma_beta(d, p, beta)
        dl = delta_of(p, m=m)
        z = zeta_from_gamma(p, beta, g) if m != 1.0 else math.nan
        return cls(int(d), float(p), float(m), beta, g, dl, z, s_star(p))

    @classmethod
    def canonical(cls, d, p):
        return cls.from_m(d, p, canonical_m(p))

    def improvement(self):
        return ImprovementFunction(self.p, self.gamma_tilde, self.delta)

    def to_dict(self):
        return {"d": self.d, "p": self.p, "m": self.m, "beta": self.beta, "gamma": self.gamma,
                "delta": self.delta, "zeta": self.zeta, "s_star": self.s_star, "kappa": self.kappa}


def phi_mp(s, cdc):
    """phi_{m,p}(s) = int_0^s exp[-zeta((1-(p-2)z)^(1-delta) - (1-(p-2)s)^(1-delta))] dz."""
    return cdc.improvement()(s)


def phi_mp_direct(s, cdc):
    """The same integral evaluated literally from (zeta, delta), as a cross-check."""
    p, z, dl = cdc.p, cdc.zeta, cdc.delta
    a = 1.0 - dl
    ws = (1.0 - (p - 2.0) * s) ** a
    val, _ = integrate.quad(lambda x: math.exp(-z * ((1.0 - (p - 2.0) * x) ** a - ws)), 0.0, s,
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def psi_mp(t, cdc):
    return cdc.improvement().psi(t)


# Frank-type constant ----------------------------------------------------------------

def phi_c(s, c, d, p):
    """(d/(2(1-c))) (2cs - s_star + sqrt(s_star^2 + 4cs(s - s_star))), evaluated without cancellation."""
    if not (0.0 < c < 1.0):
        raise DomainError("c must lie in (0, 1)")
    ss = s_star(p)
    if not (0.0 <= s <= ss):
        raise DomainError("s outside [0, s_star]")
    rad = ss * ss + 4.0 * c * s * (s - ss)
    bracket = 2.0 * c * s + 4.0 * c * s * (s - ss) / (math.sqrt(rad) + ss)
    return d / (2.0 * (1.0 - c)) * bracket


def frank_c_of_deficit(D, s, d, p):
    """Largest c with D >= c (D + d s)^2 / (D + d s_star): c = D (D + d s_star)/(D + d s)^2."""
    ss = s_star(p)
    return D * (D + d * ss) / (D + d * s) ** 2


def _s_grid(s_cap, n):
    x = np.arange(1, n + 1) / n
    return s_cap * 0.5 * (1.0 - np.cos(math.pi * x))


def frank_c_for_m(d, p, m, n_s=256, refine=True):
    """inf over s of the c allowed by i - d e >= d (phi_{m,p}(e) - e).  Returns (c, s_min)."""
    fn = CdcParams.from_m(d, p, m).improvement()
    cap = fn.s_cap
    grid = _s_grid(cap, n_s)
    cs = np.array([frank_c_of_deficit(d * fn.excess(s), s, d, p) for s in grid])
    k = int(np.argmin(cs))
    best, s_best = float(cs[k]), float(grid[k])
    if refine:
        lo = grid[k - 1] if k > 0 else 0.5 * grid[0]
        hi = grid[k + 1] if k + 1 < n_s else cap
        res = optimize.minimize_scalar(lambda s: frank_c_of_deficit(d * fn.excess(s), s, d, p),
                                       bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12 * cap})
        if res.fun < best:
            best, s_best = float(res.fun), float(res.x)
    return best, s_best


@dataclass
class FrankResult:
    c_lower: float
    c_upper: float
    m_witness: float
    s_witness: float
    m_grid_size: int
    s_grid_size: int
    s_cap: float


def frank_upper(d, p):
    return (p - 1.0) * (d + p) / (2.0 * (p - 2.0) * (d + 3.0))


def frank_constant(d, p, n_m=64, n_s=256, refine=True, reading="interpolation"):
    """Constructive lower bound for the Frank-type constant, with the limit upper bound."""
    m_minus, m_plus, lo, hi, desc = m_range(d, p, reading)
    if not lo < hi:
        raise DomainError(f"no admissible m for d={d}, p={p}: {desc} is empty")
    ms = lo + (hi - lo) * (np.arange(n_m) + 0.5) / n_m
    vals = [frank_c_for_m(d, p, m, n_s, refine) for m in ms]
    k = int(np.argmax([v[0] for v in vals]))
    best, s_best, m_best = vals[k][0], vals[k][1], float(ms[k])
    if refine:
        a = ms[k - 1] if k > 0 else lo
        b = ms[k + 1] if k + 1 < n_m else hi - 1e-9 * (hi - lo)
        res = optimize.minimize_scalar(lambda m: -frank_c_for_m(d, p, m, n_s, False)[0],
                                       bounds=(a, b), method="bounded", options={"xatol": 1e-6})
        c_ref, s_ref = frank_c_for_m(d, p, float(res.x), n_s, True)
        if c_ref > best:
            best, s_best, m_best = c_ref, s_ref, float(res.x)
    return FrankResult(best, frank_upper(d, p), m_best, s_best, n_m, n_s, s_star(p) * (1 - S_STAR_CAP))


def curves(d, p, s_values, c=None, m=None):
    """Rows (s, phi, phi_mp, phi_c) for plotting; missing branches are NaN."""
    rows = []
    heat_ok = p < spectral.bakry_emery_exponent(d)
    pack = None
    if p > 2.0:
        pack = CdcParams.from_m(d, p, m if m is not None else canonical_m(p))
    for s in s_values:
        a = phi(s, d, p) if heat_ok else math.nan
        b = phi_mp(s, pack) if pack is not None else math.nan
        e = phi_c(s, c, d, p) if (c is not None and p > 2.0) else math.nan
        rows.append((float(s), a, b, e))
    return rows
