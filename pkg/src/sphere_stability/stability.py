"""Explicit global stability constant for the interpolation inequalities on S^d.

The constant is assembled from a local analysis near the constants and a global
carre du champ bound.  Near the constants a (zonal, normalized) function is written

    F = M (1 + eps Y + eta G),   ||grad G|| = 1,   G orthogonal to degrees 0 and 1,

and the deficit is bounded below by  A eps^4 - B eps^2 eta + C eta^2 - R(eps, eta).
``R`` is kept as an explicit list of monomials ``coef * eps^a * eta^b`` (the term
ledger) so every contribution can be inspected.  Far from the constants the bound
comes from psi (heat flow) or psi_{m,p} (nonlinear flow).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import optimize
from scipy.special import binom

from . import carre_du_champ as cdc
from . import sphere_fn as sfn
from . import spectral
from .errors import DomainError, NumericalError

SERIES_TERMS = 120          # binomial series on |s| <= 1/2 converge like 2^-n
SUP_GRID = 4001
BISECT_TOL = 1e-12


# moments of the first spherical harmonics --------------------------------------------

def y_moment(d, k):
    """||Y||_k^k for Y = sqrt((d+1)/d) z (so that ||Y||_2^2 = 1/d)."""
    from .special_fn import beta_moment
    return ((d + 1.0) / d) ** (k / 2.0) * beta_moment(d, k)


def moment_table(d):
    """Closed forms for the moments of Y, Y2 = Y^2 - 1/d and Y3 used by the local analysis."""
    if int(d) != d or d < 1:
        raise DomainError(f"d must be a positive integer, got {d!r}")
    d = int(d)
    return {
        "Y_2": 1.0 / d,
        "Y_4": 3.0 * (d + 1) / ((d + 3) * d * d),
        "Y_6": 15.0 * (d + 1) ** 2 / ((d + 3) * (d + 5) * d ** 3),
        "Y_8": y_moment(d, 8),
        "Y_sup": math.sqrt((d + 1.0) / d),
        "Y2_2": 2.0 / (d * (d + 3)),
        "Y3_2": 6.0 * (d + 1) ** 2 / ((d + 5) * (d + 3) ** 2 * d ** 2),
        "lambda_1": float(d),
        "lambda_2": 2.0 * (d + 1),
        "lambda_3": 3.0 * (d + 2),
        # bounds on int Y^2 G and int Y^3 G for ||grad G|| = 1
        "g2_factor": 1.0 / math.sqrt(d * (d + 1) * (d + 3)),
        "c3": (d + 1.0) / (d * (d + 3)) * math.sqrt(2.0 / ((d + 2) * (d + 5))),
        # ||G||_2^2 <= 1/lambda_2 when G has no degree 0 or 1 part
        "G_2_bound": 1.0 / (2.0 * (d + 1)),
    }


# one-dimensional suprema ---------------------------------------------------------------

def _sup(fn, a, b, n=SUP_GRID):
    """max of fn on [a, b]: dense grid followed by bounded Brent refinement."""
    x = np.linspace(a, b, n)
    y = fn(x)
    k = int(np.nanargmax(y))
    best = float(y[k])
    lo, hi = x[max(k - 1, 0)], x[min(k + 1, n - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda s: -float(fn(np.array([s]))[0]), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    if not math.isfinite(best):
        raise NumericalError("one-dimensional maximization returned a nonfinite value")
    return best


def _series(coeffs, s):
    """sum_n coeffs[n] s^n, vectorized over s."""
    return P.polyval(np.asarray(s, dtype=float), coeffs)


def _binom_tail(p, start):
    """Coefficients of sum_{k >= start} binom(p, k) s^(k - start)."""
    k = np.arange(start, start + SERIES_TERMS)
    return binom(p, k)


def _even_tail(p):
    """Coefficients (in s) of f_p(s)/s^6, the even part of (1+s)^p beyond s^4."""
    c = np.zeros(2 * SERIES_TERMS)
    for j in range(3, SERIES_TERMS + 3):
        c[2 * j - 6] = binom(p, 2 * j)
    return c


def _log_coeffs(n):
    """Taylor coefficients of (1+s)^2 log((1+s)^2) up to degree n."""
    lg = np.zeros(n + 1)
    lg[1:] = [2.0 * (-1) ** (k + 1) / k for k in range(1, n + 1)]
    return P.polymul([1.0, 2.0, 1.0], lg)[: n + 1]


def c_p_bounds(p):
    """(c_p^+, c_p^-): extremes of f_p(s)/s^6 on [-1/2, 1/2] (f_p is even)."""
    c = _even_tail(p)
    fn = lambda s: _series(c, s)
    hi = _sup(fn, 0.0, 0.5)
    lo = -_sup(lambda s: -fn(s), 0.0, 0.5)
    if 2.0 <= p < 3.0:
        # all even coefficients beyond s^4 are nonpositive here
        hi = 0.0
    return hi, lo


def r_p_constant(p):
    """R_p = max |(1+s)^(p-1) - cubic Taylor polynomial| / s^4 over [-1/2, 1/2]."""
    c = _binom_tail(p - 1.0, 4)
    return _sup(lambda s: np.abs(_series(c, s)), -0.5, 0.5)


def _remainder_sup(ratio_small, ratio_large, limits=()):
    """sup over t != 0 of a remainder ratio, series form on |t| <= 1/2."""
    small = max(_sup(ratio_small, 1e-6, 0.5), _sup(ratio_small, -0.5, -1e-6))
    t = np.logspace(math.log10(0.5), 6, SUP_GRID)
    large = max(_sup_on(ratio_large, t), _sup_on(ratio_large, -t))
    return max([small, large, *limits])


def _sup_on(fn, t):
    y = fn(t)
    k = int(np.nanargmax(y))
    best = float(y[k])
    lo, hi = sorted((t[max(k - 1, 0)], t[min(k + 1, t.size - 1)]))
    if hi > lo:
        res = optimize.minimize_scalar(lambda s: -float(fn(np.array([s]))[0]), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return best


def k_p_constant(p):
    """Smallest K with |1+t|^p <= 1 + pt + p(p-1)t^2/2 + sum_{2<k<p} binom(p,k)|t|^k + K|t|^p.

    Returns (K_p, numeric supremum).  K_p is set to exactly 1 when the numerical
    supremum does not exceed 1 (the ratio tends to 1 as |t| -> infinity).
    """
    ks = [k for k in range(3, int(math.ceil(p))) if k < p]
    n = np.arange(3, 3 + SERIES_TERMS)
    cb = binom(p, n)
    absmask = np.isin(n, ks)

    def small(t):
        t = np.asarray(t, dtype=float)[:, None]
        terms = cb * (t ** n - np.where(absmask, np.abs(t) ** n, 0.0))
        return terms.sum(axis=1) / np.abs(t[:, 0]) ** p

    def large(t):
        t = np.asarray(t, dtype=float)
        poly = 1 + p * t + 0.5 * p * (p - 1) * t * t + sum(binom(p, k) * np.abs(t) ** k for k in ks)
        return (np.abs(1 + t) ** p - poly) / np.abs(t) ** p

    sup = _remainder_sup(small, large, limits=(1.0,))
    return (1.0 if sup <= 1.0 + 1e-9 else sup), sup


def k_tilde_constant(p, q):
    """sup_t (1 + pt + p(p-1)t^2/2 - |1+t|^p)/|t|^q for 1 < p < 2, 2 < q <= 3."""
    n = np.arange(3, 3 + SERIES_TERMS)
    cb = binom(p, n)

    def small(t):
        t = np.asarray(t, dtype=float)[:, None]
        return -(cb * t ** n).sum(axis=1) / np.abs(t[:, 0]) ** q

    def large(t):
        t = np.asarray(t, dtype=float)
        return (1 + p * t + 0.5 * p * (p - 1) * t * t - np.abs(1 + t) ** p) / np.abs(t) ** q

    limits = (-binom(p, 3),) if q == 3.0 else ()
    return _remainder_sup(small, large, limits)


def kappa_q_constant(q):
    """sup_t ((1+t)^2 log((1+t)^2) - 2t - 3t^2)/|t|^q for 2 < q <= 3."""
    c = _log_coeffs(2 * SERIES_TERMS)
    c[:3] = 0.0

    def small(t):
        t = np.asarray(t, dtype=float)
        return _series(c, t) / np.abs(t) ** q

    def large(t):
        t = np.asarray(t, dtype=float)
        w = (1 + t) ** 2
        return (w * np.log(w) - 2 * t - 3 * t * t) / np.abs(t) ** q

    limits = (2.0 / 3.0,) if q == 3.0 else ()
    return _remainder_sup(small, large, limits)


def stated_cubic_log_bound_check(n=2001):
    """Check (1+s)^2 log((1+s)^2) <= 2s + 2s^2 + (2/3)s^3 on [-1/2, 1/2].

    Returns the largest violation and the s where it occurs.  The bound fails near
    s = 0 (the true quadratic coefficient is 3), which is why the p = 2 branch uses
    k(t) <= 2t + 3t^2 + kappa_q |t|^q instead.
    """
    s = np.linspace(-0.5, 0.5, n)
    w = (1 + s) ** 2
    gap = w * np.log(w) - (2 * s + 2 * s * s + (2.0 / 3.0) * s ** 3)
    k = int(np.argmax(gap))
    return float(gap[k]), float(s[k])


def auxiliary_q(d):
    """Auxiliary exponent in (2, 2*) for the p <= 2 remainders: min(3, (2 + 2*)/2)."""
    ts = spectral.critical_exponent(d)
    return 3.0 if not math.isfinite(ts) else min(3.0, 0.5 * (2.0 + ts))


def gn_constant(d, q):
    """C_{q,d}: bound on ||G||_q^2 for ||grad G|| = 1 and G orthogonal to degrees <= 1."""
    return 1.0 / (2.0 * (d + 1)) + q * (q - 2.0) / (2.0 * (d + q))


# the sixth-order remainders of ||1 + eps Y||_p^2 --------------------------------------------

def _compose(outer, inner, deg):
    """Coefficients in eps of outer(X) with X = inner(eps), truncated at ``deg``."""
    out = np.zeros(deg + 1)
    xp = np.array([1.0])
    for c in outer:
        out[: min(xp.size, deg + 1)] += c * xp[: deg + 1]
        xp = P.polymul(xp, inner)[: deg + 1]
    return out


def _remainders(coeffs, eps_max):
    """Verbatim (eps^2 <= 1/2, signed) and mechanical (|.| beyond eps^6, eps <= eps_max) sums."""
    tail = coeffs[6:]
    k = np.arange(tail.size)
    verbatim = float(np.dot(tail, 2.0 ** (-k / 2.0)))
    mech = float(tail[0] + np.dot(np.abs(tail[1:]), eps_max ** k[1:]))
    return verbatim, mech


# domain types --------------------------------------------------------------------

@dataclass(frozen=True)
class Term:
    """One monomial coef * eps^eps_power * eta^eta_power of the remainder."""

    name: str
    coef: float
    eps_power: float
    eta_power: float

    @property
    def theta_exponent(self):
        """Exponent e such that the term is at most weight * theta^e * (eps^4 + eta^2)."""
        a, b = self.eps_power, self.eta_power
        if b >= 2:
            return (a + b - 2.0) / 2.0
        if b == 1:
            return (a - 2.0) / 2.0
        return (a - 4.0) / 2.0

    @property
    def weight(self):
        # eps^2 eta <= (eps^4 + eta^2)/2
        return 0.5 if self.eta_power == 1 else 1.0

    def value(self, eps, eta):
        return self.coef * eps ** self.eps_power * eta ** self.eta_power

    def rho(self, theta):
        return self.coef * self.weight * theta ** self.theta_exponent


@dataclass
class TaylorConstants:
    d: int
    p: float
    branch: str
    a: float
    b: float
    c_plus: float
    c_minus: float
    c_plus_pd: float
    c_minus_pd: float
    r_plus: float
    r_minus: float
    r_plus_mech: float
    r_minus_mech: float
    R_p: float
    K_p: float
    K_p_numeric: float
    C_pd: float
    q: float
    kappa_q: float
    eps_max: float
    R_pd: float = 0.0

    def to_dict(self):
        return asdict(self)


@dataclass
class StabilityBreakdown:
    d: int
    p: float
    taylor: TaylorConstants
    A: float
    B: float
    C: float
    discriminant: float
    lam: float
    lam_plus: float
    terms: list
    theta_prime: float
    theta_pd: float
    theta_cap: float
    theta0: float
    m: float
    psi_branch: str
    gamma: float
    branch_far: float
    branch_near: float
    S: float
    S_half_d_variant: float
    moments: dict = field(default_factory=dict)

    def to_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k not in ("taylor", "terms")}
        out["taylor"] = self.taylor.to_dict()
        out["terms"] = [asdict(t) | {"theta_exponent": t.theta_exponent, "weight": t.weight}
                        for t in self.terms]
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def rho(self, theta):
        return sum(t.rho(theta) for t in self.terms)

    def local_lower_bound(self, eps, eta):
        """A eps^4 - B eps^2 eta + C eta^2 - R(eps, eta) (valid for eps^2 + eta^2 <= theta')."""
        rem = sum(t.value(eps, eta) for t in self.terms)
        return self.A * eps ** 4 - self.B * eps * eps * eta + self.C * eta * eta - rem


# constants -------------------------------------------------------------------------

def _check_p(d, p):
    params = spectral.Params(d, p)
    if not p > 1.0:
        raise DomainError(f"p must lie in (1, 2*), got {p}")
    return params


def taylor_constants(d, p):
    """Taylor constants of the local analysis for p in (1, 2*) (p = 2 uses the log branch)."""
    params = _check_p(d, p)
    d, p = params.d, params.p
    mom = moment_table(d)
    eps_max = math.sqrt(d / (4.0 * (d + 1.0)))
    q = auxiliary_q(d)
    if params.is_log:
        c = _log_coeffs(2 * SERIES_TERMS)
        even = np.zeros_like(c)
        even[0::2] = c[0::2]
        tail = even[6:]
        fn = lambda s: _series(tail, s)
        c_plus = _sup(fn, 0.0, 0.5)
        c_minus = -_sup(lambda s: -fn(s), 0.0, 0.5)
        # R_p slot holds the quartic remainder of (1+s)(1 + 2 log(1+s))
        jt = np.array([2.0 * (-1) ** n / (n * (n - 1)) for n in range(4, 4 + SERIES_TERMS)])
        R = _sup(lambda s: np.abs(_series(jt, s)), -0.5, 0.5)
        tc = TaylorConstants(d, p, "log", 1.0 / d, -mom["Y_4"] / 6.0, c_plus, c_minus,
                             c_plus * mom["Y_6"], c_minus * mom["Y_6"], math.nan, math.nan,
                             max(c_plus, 0.0) * mom["Y_6"], max(-c_minus, 0.0) * mom["Y_6"], R,
                             math.nan, math.nan, gn_constant(d, q), q, kappa_q_constant(q), eps_max)
        return _json_safe(tc)

    a = p * (p - 1.0) / (2.0 * d)
    b = 0.25 * (p - 2.0) * (p - 3.0) * ((d + 1.0) / (d * (d + 3.0))) * a
    c_plus, c_minus = c_p_bounds(p)
    cpd_plus, cpd_minus = c_plus * mom["Y_6"], c_minus * mom["Y_6"]
    s = 2.0 / p
    deg = 24
    # the lower expansions below need a e^2 + b e^4 + c- e^6 >= 0 on the eps range
    low_ok = a - abs(b) * eps_max ** 2 - abs(cpd_minus) * eps_max ** 4 > 0.0
    if p < 2.0 and not low_ok:
        raise NumericalError("lower expansion of ||1 + eps Y||_p^p is not positive on the eps range")
    if p > 2.0:
        # (1+X)^(2/p) <= 1 + 2X/p - (p-2)X^2/p^2 + (2/3)(p-1)(p-2)X^3/p^3
        up = _compose([1.0, s, 0.5 * s * (s - 1.0), s * (s - 1.0) * (s - 2.0) / 6.0],
                      [0.0, 0.0, a, 0.0, b, 0.0, cpd_plus], deg)
        low = _compose([1.0, s, 0.5 * s * (s - 1.0)], [0.0, 0.0, a, 0.0, b, 0.0, cpd_minus], deg)
    else:
        # (1+X)^s, 1 < s < 2: upper by the quadratic, lower with the cubic correction
        up = _compose([1.0, s, 0.5 * s * (s - 1.0)], [0.0, 0.0, a, 0.0, b, 0.0, cpd_plus], deg)
        low = _compose([1.0, s, 0.5 * s * (s - 1.0), -s * (s - 1.0) * (2.0 - s) / 6.0],
                       [0.0, 0.0, a, 0.0, b, 0.0, cpd_minus], deg)
    r_plus, r_plus_mech = _remainders(up, eps_max)
    r_minus, r_minus_mech = _remainders(-low, eps_max)
    if not low_ok:
        r_minus = r_minus_mech = math.nan
    if p > 2.0:
        K, K_num = k_p_constant(p)
        kq = math.nan
        C = gn_constant(d, p)
    else:
        K, K_num = math.nan, math.nan
        kq = k_tilde_constant(p, q)
        C = gn_constant(d, q)
    tc = TaylorConstants(d, p, "power", a, b, c_plus, c_minus, cpd_plus, cpd_minus, r_plus, r_minus,
                         max(r_plus_mech, 0.0), max(r_minus_mech, 0.0) if low_ok else math.nan, r_p_constant(p), K, K_num, C,
                         q if p < 2.0 else math.nan, kq, eps_max)
    return _json_safe(tc)


def _json_safe(tc):
    for k, v in asdict(tc).items():
        if isinstance(v, float) and math.isnan(v):
            setattr(tc, k, None)
    return tc


def norm_sandwich(d, p, eps, tc=None):
    """(lower, value, upper) for ||1 + eps Y||_p^p with the sixth-order constants."""
    tc = tc or taylor_constants(d, p)
    val = sfn.norm_p(sfn.test_family("one_plus_eps_Y", d, eps), p) ** p
    if tc.branch == "log":
        # ||1 + eps Y||_2^2 = 1 + eps^2/d with no remainder
        exact = 1.0 + eps * eps / d
        return exact, val, exact
    base = 1.0 + tc.a * eps ** 2 + tc.b * eps ** 4
    return base + tc.c_minus_pd * eps ** 6, val, base + tc.c_plus_pd * eps ** 6


def quadratic_form(d, p):
    """(A, B, C, discriminant, lambda_minus, lambda_plus) of A eps^4 - B eps^2 eta + C eta^2.

    ``lambda_minus`` is the largest lambda with A s^2 - B s + C >= lambda (s^2 + 1)
    for all s; ``lambda_plus`` is the other root of B^2 = 4(A - lambda)(C - lambda).
    """
    params = _check_p(d, p)
    d, p = params.d, params.p
    A = (p - 1.0) * (d + p) / (2.0 * d * (d + 3.0))
    B = d * (p - 1.0) / math.sqrt(d * (d + 1.0) * (d + 3.0))
    C = (d + 2.0) / (2.0 * (d + 1.0))
    disc = B * B - 4.0 * A * C
    if not disc < 0.0:
        raise DomainError(f"discriminant {disc} is not negative; p={p} must lie in (1, 2*)")
    root = math.hypot(A - C, B)
    return A, B, C, disc, 0.5 * (A + C - root), 0.5 * (A + C + root)


# term ledger -----------------------------------------------------------------------

def _terms_power(d, p, tc):
    """Remainder monomials for p != 2.  ``f`` is the factor d/|p - 2|."""
    mom = moment_table(d)
    gn = mom["G_2_bound"]
    y8 = math.sqrt(mom["Y_8"])               # ||Y^4||_2 = ||Y||_8^4
    ysup = mom["Y_sup"]
    f = d / abs(p - 2.0)
    ku = abs(p - 2.0) * max(1.5 ** (p - 3.0), 0.5 ** (p - 3.0)) * ysup
    W = [0.5 * p * (p - 1.0) * abs(p - 2.0) * mom["g2_factor"],
         p * (p - 1.0) * abs(p - 2.0) * abs(p - 3.0) / 6.0 * mom["c3"],
         p * tc.R_p * y8 * math.sqrt(gn)]
    terms = [
        Term("sixth_order_norm", f * (tc.r_plus_mech if p > 2 else tc.r_minus_mech), 6, 0),
        Term("cubic_mode_coupling", f * (2.0 / p) * W[1], 3, 1),
        Term("quartic_remainder_coupling", f * (2.0 / p) * W[2], 4, 1),
        Term("weighted_G_norm", f * (p - 1.0) * gn * ku, 1, 2),
    ]
    if p > 2.0:
        kx = tc.a + abs(tc.b) * tc.eps_max ** 2 + abs(tc.c_plus_pd) * tc.eps_max ** 4
        kap = (p - 2.0) / p * kx
        for k in [k for k in range(3, int(math.ceil(p))) if k < p]:
            terms.append(Term(f"binomial_{k}", f * (2.0 / p) * binom(p, k) * 1.5 ** (p - k)
                              * tc.C_pd ** (k / 2.0), 0, k))
        terms.append(Term("top_power", f * (2.0 / p) * tc.K_p * tc.C_pd ** (p / 2.0), 0, p))
    else:
        kap = (2.0 - p) / (2.0 * d)
        q = tc.q
        kmax = (1.0 + tc.eps_max ** 2 / d) ** ((2.0 - p) / 2.0) - 1.0
        terms.append(Term("auxiliary_power", f * (2.0 / p) * (1.0 + kmax) * tc.kappa_q
                          * 2.0 ** (q - p) * tc.C_pd ** (q / 2.0), 0, q))
    # norm-factor correction kappa eps^2 |T1|
    for name, w, a in (("norm_factor_quadratic", W[0], 4), ("norm_factor_cubic", W[1], 5),
                       ("norm_factor_quartic", W[2], 6)):
        terms.append(Term(name, f * (2.0 / p) * kap * w, a, 1))
    return terms


def _terms_log(d, tc):
    mom = moment_table(d)
    gn = mom["G_2_bound"]
    y8 = math.sqrt(mom["Y_8"])
    q = tc.q
    return [
        Term("sixth_order_norm", 0.5 * d * max(tc.c_plus, 0.0) * mom["Y_6"], 6, 0),
        Term("cubic_mode_coupling", d / 3.0 * mom["c3"], 3, 1),
        Term("quartic_remainder_coupling", d * tc.R_p * y8 * math.sqrt(gn), 4, 1),
        Term("weighted_G_norm", 2.0 * d * mom["Y_sup"] * gn, 1, 2),
        Term("auxiliary_power", 0.5 * d * tc.kappa_q * 2.0 ** (q - 2.0) * tc.C_pd ** (q / 2.0), 0, q),
        # (N - 1)^3 with N - 1 <= eps^2/d + gn eta^2
        Term("mass_cubic_eps6", d / 12.0 / d ** 3, 6, 0),
        Term("mass_cubic_eps4_eta2", d / 12.0 * 3.0 * gn / d ** 2, 4, 2),
        Term("mass_cubic_eps2_eta4", d / 12.0 * 3.0 * gn * gn / d, 2, 4),
        Term("mass_cubic_eta6", d / 12.0 * gn ** 3, 0, 6),
    ]


def term_ledger(d, p, tc=None):
    params = _check_p(d, p)
    tc = tc or taylor_constants(params.d, params.p)
    terms = _terms_log(params.d, tc) if params.is_log else _terms_power(params.d, params.p, tc)
    terms = [t for t in terms if t.coef != 0.0]
    for t in terms:
        if not (math.isfinite(t.coef) and t.coef >= 0.0):
            raise NumericalError(f"term ledger entry {t.name} is not a finite nonnegative number")
        if not t.theta_exponent > 0.0:
            raise NumericalError(f"term ledger entry {t.name} is not of higher order")
    return terms


def _solve_theta(terms, target, cap):
    """Largest theta in (0, cap] with rho(theta) <= target (rho is increasing)."""
    rho = lambda th: sum(t.rho(th) for t in terms)
    if rho(cap) <= target:
        return cap
    lo, hi = 0.0, cap
    # bisection on log(theta) first, then plain bisection to absolute tolerance
    llo, lhi = math.log(1e-300), math.log(cap)
    for _ in range(200):
        mid = 0.5 * (llo + lhi)
        if rho(math.exp(mid)) <= target:
            llo = mid
        else:
            lhi = mid
        if lhi - llo < 1e-14:
            break
    lo, hi = math.exp(llo), math.exp(lhi)
    while hi - lo > BISECT_TOL * hi:
        mid = 0.5 * (lo + hi)
        if rho(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


# assembly -------------------------------------------------------------------------

def _far_branch(d, p, theta0, n_m=16):
    """(d/theta0) psi(theta0/d) with the psi appropriate to p, plus (m, gamma, label).

    p > 2 uses the canonical m = (p+2)/(2p) when it is admissible (it needs p < 6);
    otherwise the heat flow below the Bakry-Emery exponent, and as a last resort the
    best m on a grid of the admissible set.
    """
    t = theta0 / d
    if p > 2.0:
        try:
            pack = cdc.CdcParams.canonical(d, p)
            return d / theta0 * cdc.psi_mp(t, pack), pack.m, pack.gamma, "nonlinear_flow_canonical_m"
        except DomainError:
            pass
    if p < spectral.bakry_emery_exponent(d):
        g = cdc.gamma_heat(d, p)
        return d / theta0 * cdc.psi(t, d, p), 1.0, g, "heat_flow"
    _, _, lo, hi, desc = cdc.m_range(d, p)
    if not lo < hi:
        raise DomainError(f"no carre du champ improvement for d={d}, p={p}: {desc} is empty")
    best = None
    for m in lo + (hi - lo) * (np.arange(n_m) + 0.5) / n_m:
        pack = cdc.CdcParams.from_m(d, p, float(m))
        val = d / theta0 * cdc.psi_mp(t, pack)
        if best is None or val > best[0]:
            best = (val, pack.m, pack.gamma, "nonlinear_flow_grid_m")
    return best


def _assemble(d, p):
    params = _check_p(d, p)
    d, p = params.d, params.p
    step = "taylor constants"
    try:
        tc = taylor_constants(d, p)
        step = "quadratic form"
        A, B, C, disc, lam, lam_plus = quadratic_form(d, p)
        step = "term ledger"
        terms = term_ledger(d, p, tc)
        tc.R_pd = float(sum(t.coef for t in terms))
        step = "theta_{p,d}"
        theta_p = _solve_theta(terms, 0.5 * lam, tc.eps_max ** 2)
        theta_pd = theta_p * d / (d + theta_p)
        theta_cap = min(d / 2.0, 0.25, theta_pd)
        theta0 = d * theta_cap / (d + (p - 2.0) * theta_cap) if p > 2.0 else theta_cap
        step = "carre du champ branch"
        far, m, gamma, label = _far_branch(d, p, theta0)
    except (DomainError, NumericalError) as exc:
        raise type(exc)(f"assembly failed at step '{step}': {exc}") from exc
    S = min(far, 0.5 * lam)
    for name, v in (("lambda", lam), ("theta0", theta0), ("far branch", far), ("S", S)):
        if not (math.isfinite(v) and v > 0.0):
            raise NumericalError(f"assembly failed: {name} = {v!r}")
    return StabilityBreakdown(d, p, tc, A, B, C, disc, lam, lam_plus, terms, theta_p, theta_pd,
                              theta_cap, theta0, m, label, gamma, far, 0.5 * lam, S,
                              S * min(1.0, d / 2.0), moment_table(d))


def assemble_S(d, p):
    """Full breakdown of the global stability constant S_{d,p} for p in (1, 2*)."""
    return _assemble(d, p)


def assemble_S_small_p(d, p):
    """Same pipeline restricted to p in (1, 2] (heat-flow psi, auxiliary exponent q)."""
    if not (1.0 < p <= 2.0):
        raise DomainError(f"assemble_S_small_p needs p in (1, 2], got {p}")
    return _assemble(d, p)


# audits --------------------------------------------------------------------------

@dataclass
class GlobalAudit:
    lhs: float
    rhs: float
    margin: float
    rhs_l2_denominator: float
    margin_l2_denominator: float
    rhs_half_d: float
    margin_half_d: float
    S: float

    def to_dict(self):
        return asdict(self)


def audit_global(f, p, S=None, breakdown=None):
    """Deficit against S times the distance term, with three denominator variants.

    * main: ||grad Pi_1 F||^4 / (||grad F||^2 + ||F||_p^2) + ||grad (Id - Pi_1) F||^2;
    * ``l2_denominator``: ||F||_2^2 in place of ||F||_p^2;
    * ``half_d``: (d/2)||F||_2^2 in the denominator, with S min(1, d/2).
    """
    d = f.d
    if S is None:
        S = (breakdown or assemble_S(d, p)).S
    i = sfn.grad_norm_sq(f)
    lhs = i - d * sfn.entropy(f, p) if sfn.norm2_sq(f) > 0 else 0.0
    g1 = sfn.grad_norm_sq(sfn.project(f, 1))
    gp = sfn.grad_norm_sq(sfn.complement(f, 1))
    n2 = sfn.norm2_sq(f)
    npp = sfn.norm_p(f, p) ** 2
    frac = lambda den: g1 * g1 / den if den > 0 else 0.0
    rhs = S * (frac(i + npp) + gp)
    rhs2 = S * (frac(i + n2) + gp)
    rhs3 = S * min(1.0, d / 2.0) * (frac(i + 0.5 * d * n2) + gp)
    return GlobalAudit(lhs, rhs, lhs - rhs, rhs2, lhs - rhs2, rhs3, lhs - rhs3, S)


def decompose(f):
    """(M, eps, eta, G) with F = M(1 + eps Y + eta G), eps, eta >= 0 (requires mean != 0)."""
    c = np.array(f.coefficients, dtype=float)
    if c[0] == 0.0:
        raise DomainError("decomposition needs a nonzero mean")
    if c[0] < 0.0:
        c = -c
    M = c[0]
    d = f.d
    c1 = c[1] if c.size > 1 else 0.0
    eps = abs(c1) * math.sqrt(d) / M
    gc = np.zeros_like(c)
    gc[2:] = c[2:]
    if c1 < 0.0:
        # reflect z -> -z so that the degree-1 part is positive; odd degrees flip
        gc[1::2] = -gc[1::2]
    G = sfn.ZonalFn(d, gc / M)
    eta = math.sqrt(sfn.grad_norm_sq(G))
    if eta > 0.0:
        G = (1.0 / eta) * G
    return M, eps, eta, G


def random_zonal(d, rng, L=24):
    """Random zonal function mixing near-constant, sign-changing and high-mode shapes."""
    kind = rng.integers(4)
    c = np.zeros(L + 1)
    decay = (1.0 + np.arange(L + 1)) ** (-rng.uniform(0.5, 3.0))
    c[1:] = rng.standard_normal(L) * decay[1:]
    if kind == 0:
        c[0] = 1.0
        c[1:] *= 10.0 ** rng.uniform(-4, -1)
    elif kind == 1:
        c[0] = rng.standard_normal()
    elif kind == 2:
        c[0] = 1.0
        c[1] = 0.0
        c[2:] *= 10.0 ** rng.uniform(-3, 0)
    else:
        c[0] = 1.0
        c[1] = 10.0 ** rng.uniform(-3, -0.5)
        c[2:] *= 10.0 ** rng.uniform(-5, -2)
    return sfn.ZonalFn(d, c)


SWEEP_P_MAX = 8.0      # cap on p when 2* is infinite (d <= 2)


def sweep(ds=(1, 2, 3, 4, 5), n=10, p_max=SWEEP_P_MAX):
    """Rows (d, p, lambda, theta_pd, S, branch) over a p-grid per dimension."""
    rows = []
    for d in ds:
        for p in spectral.p_grid(d, n, p_max):
            b = assemble_S(d, p)
            rows.append({"d": d, "p": p, "lambda": b.lam, "theta_pd": b.theta_pd, "S": b.S,
                         "branch": "near" if b.S == b.branch_near else "far"})
    return rows
