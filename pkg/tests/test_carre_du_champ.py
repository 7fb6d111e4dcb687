import math

import numpy as np
import pytest

from sphere_stability import carre_du_champ as cdc
from sphere_stability import sphere_fn as sfn
from sphere_stability import stability as st
from sphere_stability.errors import DomainError


def fd1(f, s, h):
    return (f(s + h) - f(s - h)) / (2 * h)


def test_gamma_heat_values():
    assert cdc.gamma_heat(1, 2.0) == pytest.approx(1 / 3)
    for d in range(2, 7):
        assert cdc.gamma_heat(d, 2.0) == pytest.approx((4 * d - 1) / (d + 2) ** 2, rel=1e-14)
        assert cdc.gamma_heat(d, 1.0) == 0.0
        two_sharp = (2 * d * d + 1) / (d - 1) ** 2
        assert abs(cdc.gamma_heat(d, two_sharp)) < 1e-12
        with pytest.raises(DomainError):
            cdc.gamma_heat(d, two_sharp + 0.1)
    assert cdc.gamma_log_sobolev_stated(2) == pytest.approx(cdc.gamma_heat(2, 2.0))


def test_p_star():
    assert cdc.p_star(1) == 1.75
    assert cdc.p_star(2) == pytest.approx(13 - 2 * math.sqrt(32), rel=1e-12)
    for d in range(2, 6):
        ps = cdc.p_star(d)
        assert abs(cdc.gamma_heat(d, ps) - (2 - ps)) <= 1e-10


@pytest.mark.parametrize("d,p", [(3, 3.0), (3, 4.0), (4, 2.5), (2, 7.0)])
def test_m_range_and_gamma_m(d, p):
    m_minus, m_plus, lo, hi, _ = cdc.m_range(d, p)
    assert m_minus < m_plus
    # gamma vanishes where the radical is doubled; the returned interval sits strictly inside
    c = (d * p + 2) / ((d + 2) * p)
    w = 2 * math.sqrt(d * (p - 1) * (2 * d - (d - 2) * p)) / ((d + 2) * p)
    for root in (c - w, c + w):
        if abs(2 - p * (1 - root)) > 1e-6:
            assert abs(cdc.gamma_m(d, p, root)) < 1e-10
    for m in np.linspace(m_minus, m_plus, 9):
        if abs(2 - p * (1 - m)) > 1e-6:
            assert cdc.gamma_m(d, p, m) > 0
    if p < (2 * d * d + 1) / (d - 1) ** 2:
        assert cdc.gamma_m(d, p, 1.0) == pytest.approx(cdc.gamma_heat(d, p), abs=1e-12)
    for m in np.linspace(lo, hi, 7)[1:-1]:
        b = cdc.beta_of_m(p, m)
        assert abs(cdc.m_of_beta(p, b) - m) <= 1e-14
        assert cdc.gamma_m(d, p, m) == pytest.approx(cdc.gamma_beta(d, p, b), rel=1e-12, abs=1e-14)
    if p < 6:
        assert lo <= cdc.canonical_m(p) < hi


def test_phi_examples():
    assert cdc.phi(0.0, 3, 3.0) == 0.0
    assert cdc.phi(1.0, 1, 2.0) == pytest.approx(3 * math.expm1(1 / 3), rel=1e-13)
    d = 2
    ps = cdc.p_star(d)
    for eps in (1e-5, 1e-7):
        a = cdc.phi(0.3, d, ps + eps)
        b = cdc.phi(0.3, d, ps)
        assert abs(a - b) < 1e-4


@pytest.mark.parametrize("d,p", [(1, 1.5), (3, 2.0), (3, 3.0), (5, 1.2), (2, 4.0)])
def test_phi_ode_and_shape(d, p):
    g = cdc.gamma_heat(d, p)
    f = lambda s: cdc.phi(s, d, p)
    h = 1e-5
    assert fd1(f, h, h / 2) == pytest.approx(1.0, abs=1e-4)
    top = 0.9 * cdc.s_star(p) if p > 2 else 3.0
    s = np.linspace(0.01, top, 60)
    res = [fd1(f, x, 1e-5 * max(x, 1e-3)) - 1 - g * f(x) / (1 - (p - 2) * x) for x in s]
    scale = max(1.0, max(abs(fd1(f, x, 1e-5 * x)) for x in s))
    assert max(abs(r) for r in res) <= 1e-8 * scale
    vals = np.array([f(x) for x in s])
    assert np.all(np.diff(vals) > 0) and np.all(np.diff(vals, 2) > -1e-12)
    # the generic ODE solver agrees with the closed form
    fn = cdc.heat_improvement(d, p)
    assert max(abs(fn(x) - f(x)) / f(x) for x in s[::6]) < 1e-10


@pytest.mark.parametrize("d,p", [(3, 3.0), (3, 5.0), (2, 7.0), (4, 3.5)])
def test_phi_mp(d, p):
    m_minus, m_plus, lo, hi, _ = cdc.m_range(d, p)
    m = cdc.canonical_m(p) if lo <= cdc.canonical_m(p) < hi else 0.5 * (lo + hi)
    pack = cdc.CdcParams.from_m(d, p, m)
    assert cdc.phi_mp(0.0, pack) == 0.0
    fn = pack.improvement()
    s = np.linspace(0.02, 0.9, 40) * fn.s_star
    for x in s[::5]:
        assert cdc.phi_mp(x, pack) == pytest.approx(cdc.phi_mp_direct(x, pack), rel=1e-9)
        lhs = fd1(fn, x, 1e-6 * x)
        assert abs(lhs - fn.derivative(x)) <= 1e-8 * max(1.0, lhs)
    vals = np.array([fn(x) for x in s])
    assert np.all(np.diff(vals) > 0) and np.all(np.diff(vals, 2) > -1e-12)


@pytest.mark.parametrize("d,p", [(1, 2.0), (3, 2.0), (3, 3.0), (4, 1.5)])
def test_psi(d, p):
    g = cdc.gamma_heat(d, p)
    assert cdc.psi(0.0, d, p) == 0.0
    h = 1e-4
    second = 2 * cdc.psi(h, d, p) / h ** 2
    assert second == pytest.approx(g, rel=1e-3)
    t = np.linspace(0, 10, 101)
    vals = np.array([cdc.psi(x, d, p) for x in t])
    assert np.all(np.diff(vals, 2) >= -1e-12)
    fn = cdc.heat_improvement(d, p)
    for x in (0.3, 2.0, 9.0):
        s = fn.inverse(x)
        assert abs(fn(s) - x) <= 1e-11 * max(1.0, x)
    if p == 2.0:
        for x in t[1:]:
            assert cdc.psi(x, d, p) == pytest.approx(cdc.psi_log_sobolev(x, g), rel=1e-10, abs=1e-15)
            assert cdc.psi(x, d, p) >= 0.5 * g * x * x / (1 + g * x)
    if p > 2:
        assert 200.0 - cdc.psi(200.0, d, p) == pytest.approx(cdc.s_star(p), rel=1e-2)
    with pytest.raises(DomainError):
        cdc.psi(-1.0, d, p)


def test_phi_c():
    d, p = 3, 4.0
    assert cdc.phi_c(0.0, 0.3, d, p) == pytest.approx(0.0, abs=1e-15)
    ss = cdc.s_star(p)
    # phi_c(s) ~ c d s^2 / s_star as c -> 0
    assert cdc.phi_c(0.2, 1e-9, d, p) / 1e-9 == pytest.approx(d * 0.2 ** 2 / ss, rel=1e-6)
    for c in (0.2, 0.6):
        for e in (0.05, 0.2, 0.4):
            D = cdc.phi_c(e, c, d, p)
            i = D + d * e
            assert D == pytest.approx(c * i * i / (i + d / (p - 2) - d * e), rel=1e-10)
    with pytest.raises(DomainError):
        cdc.phi_c(0.1, 1.2, d, p)


def test_frank_constant_small():
    assert cdc.frank_upper(3, 4.0) == pytest.approx(0.875)
    r = cdc.frank_constant(3, 3.0, n_m=12, n_s=96)
    assert 0 < r.c_lower <= r.c_upper
    fine = cdc.frank_constant(3, 3.0, n_m=12, n_s=192, refine=False)
    coarse = cdc.frank_constant(3, 3.0, n_m=12, n_s=96, refine=False)
    assert fine.c_lower <= coarse.c_lower + 1e-12
    with pytest.raises(DomainError):
        cdc.frank_constant(3, 1.5)


def test_improvement_audits_random():
    rng = np.random.default_rng(7)
    for d, p in ((2, 2.0), (3, 1.5), (3, 3.0), (3, 5.0)):
        for _ in range(30):
            f = st.random_zonal(d, rng)
            if sfn.norm2_sq(f) == 0:
                continue
            r = sfn.deficit_report(f, p, k_values=(1,), tol=1e-8)
            assert all(r.passed.values()), (d, p, r.margins)
