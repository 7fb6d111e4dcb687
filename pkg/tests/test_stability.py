import math

import numpy as np
import pytest

from sphere_stability import sphere_fn as sfn
from sphere_stability import stability as st
from sphere_stability.errors import DomainError

PAIRS = [(1, 2.0), (1, 4.0), (2, 2.0), (2, 3.0), (3, 1.5), (3, 3.0), (3, 5.0), (4, 2.5), (5, 3.0)]


@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_moment_table_against_quadrature(d):
    mt = st.moment_table(d)
    y, y2, y3 = sfn.y_fn(d), sfn.y2_fn(d), sfn.y3_fn(d)
    for k in (2, 4, 6, 8):
        assert sfn.norm_p(y, float(k)) ** k == pytest.approx(mt[f"Y_{k}"], rel=1e-10)
    assert sfn.norm2_sq(y2) == pytest.approx(mt["Y2_2"], rel=1e-10)
    assert sfn.norm2_sq(y3) == pytest.approx(mt["Y3_2"], rel=1e-10)
    assert sfn.grad_norm_sq(y2) / sfn.norm2_sq(y2) == pytest.approx(mt["lambda_2"], rel=1e-12)
    if d == 3:
        assert mt["Y_4"] == pytest.approx(2 / 9)
        assert mt["c3"] == pytest.approx((2 / 9) / math.sqrt(20))


@pytest.mark.parametrize("d,p", PAIRS)
def test_taylor_constants(d, p):
    tc = st.taylor_constants(d, p)
    gn = lambda r: 1 / (2 * (d + 1)) + r * (r - 2) / (2 * (d + r))
    if p == 2.0:
        # log branch: int F^2 log F^2 expansion of 1 + eps Y
        assert tc.branch == "log" and tc.a == pytest.approx(1 / d)
        assert tc.b == pytest.approx(-st.moment_table(d)["Y_4"] / 6)
    else:
        assert tc.a == pytest.approx(p * (p - 1) / (2 * d), rel=1e-14)
        b = 0.25 * (p - 2) * (p - 3) * (d + 1) / (d * (d + 3)) * tc.a
        assert tc.b == pytest.approx(b, rel=1e-13, abs=1e-15)
    # below p = 2 the Gagliardo-Nirenberg step runs at the auxiliary exponent q
    r = p if p > 2 else tc.q
    assert tc.C_pd == pytest.approx(gn(r), rel=1e-14)
    if 2 < p < 3:
        assert tc.c_plus == 0.0
    if 2 < p <= 4:
        assert tc.K_p == 1.0


def test_k_p_equals_one():
    for p in (2.2, 3.0, 3.7, 4.0, 6.0):
        K, _ = st.k_p_constant(p)
        assert K == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("d,p", PAIRS)
def test_norm_sandwich(d, p):
    tc = st.taylor_constants(d, p)
    for eps in (0.1, 0.2, 0.4):
        if eps * math.sqrt((d + 1) / d) > 0.5:
            continue    # the sixth-order bounds are derived for |eps Y| <= 1/2
        lo, val, hi = st.norm_sandwich(d, p, eps, tc)
        assert lo - 1e-12 * val <= val <= hi + 1e-12 * val


@pytest.mark.parametrize("d,p", PAIRS)
def test_quadratic_form(d, p):
    A, B, C, disc, lam, lam_plus = st.quadratic_form(d, p)
    assert A == pytest.approx((p - 1) * (d + p) / (2 * d * (d + 3)))
    assert disc == pytest.approx(-(p - 1) * (2 * d - p * (d - 2)) / (d * (d + 3)), rel=1e-12, abs=1e-15)
    for root in (lam, lam_plus):
        assert abs(B * B - 4 * (A - root) * (C - root)) <= 1e-10
    s = np.linspace(-20, 20, 4001)
    margin = A * s * s - B * s + C - lam * (s * s + 1)
    assert margin.min() >= -1e-12


def test_quadratic_form_specific_and_edges():
    assert st.quadratic_form(3, 3.0)[3] == pytest.approx(-1 / 3, rel=1e-12)
    assert abs(st.quadratic_form(3, 6.0 - 1e-9)[3]) < 1e-8
    with pytest.raises(DomainError):
        st.quadratic_form(3, 6.5)


@pytest.mark.parametrize("d,p", PAIRS)
def test_assemble_structure(d, p):
    b = st.assemble_S(d, p)
    assert 0 < b.S <= 0.5 * b.lam
    assert b.theta_cap == min(d / 2, 0.25, b.theta_pd)
    if p > 2:
        back = d * b.theta0 / (d - (p - 2) * b.theta0)
        assert back == pytest.approx(b.theta_cap, rel=1e-10)
    assert b.rho(b.theta_prime) <= 0.5 * b.lam * (1 + 1e-9)
    vals = b.to_dict()
    assert all(math.isfinite(v) for v in vals.values() if isinstance(v, float))


def test_small_p_entry_point():
    b = st.assemble_S_small_p(1, 2.0)
    assert b.S > 0 and b.gamma == pytest.approx(1 / 3)
    with pytest.raises(DomainError):
        st.assemble_S_small_p(3, 3.0)


@pytest.mark.parametrize("d,p", [(1, 2.0), (2, 3.0), (3, 3.0), (3, 1.5), (4, 2.5)])
def test_local_lower_bound(d, p):
    b = st.assemble_S(d, p)
    y = sfn.y_fn(d)
    eps_max = b.taylor.eps_max
    for seed in range(4):
        G = sfn.random_highmode(d, seed, k_min=2, L=10)
        for eps in (0.3 * eps_max, eps_max):
            for eta in (0.0, 0.01, 0.2, 1.0):
                F = 1.0 + eps * y + eta * G
                dft = sfn.grad_norm_sq(F) - d * sfn.entropy(F, p)
                assert dft >= b.local_lower_bound(eps, eta) - 1e-12


def test_audit_global_basic():
    f = sfn.ZonalFn.constant(3, 2.0)
    a = st.audit_global(f, 3.0)
    assert abs(a.lhs) <= 1e-12 and abs(a.rhs) == 0.0
    g = sfn.random_highmode(3, 0)          # Pi_1 g = 0: compare with the improved constant
    F = 1.0 + 0.3 * g
    a = st.audit_global(F, 3.0)
    rep = sfn.deficit_report(F, 3.0, k_values=(1,))
    assert a.lhs == pytest.approx(rep.deficit, rel=1e-12)
    assert a.rhs <= rep.rhs["improved_k1"]
    M, eps, eta, G = st.decompose(F)
    assert M == pytest.approx(1.0) and eps == 0.0 and eta == pytest.approx(0.3, rel=1e-12)


def test_cubic_log_bound_reported_false():
    gap, s = st.stated_cubic_log_bound_check()
    assert gap > 0 and -0.5 <= s <= 0.5


def test_breakdown_json_deterministic():
    a = st.assemble_S(3, 3.0).to_json()
    b = st.assemble_S(3, 3.0).to_json()
    assert a == b and a.endswith("\n")


def test_domain_errors():
    with pytest.raises(DomainError):
        st.assemble_S(3, 7.0)
    with pytest.raises(DomainError):
        st.assemble_S(2, 10.0)
