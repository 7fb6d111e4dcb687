import math

import numpy as np
import pytest

from sphere_stability import spectral as sp
from sphere_stability.errors import DomainError


def P(d, p):
    return sp.Params(d, p)


def test_params_exponents():
    assert sp.critical_exponent(1) == math.inf and sp.critical_exponent(3) == 6.0
    for d in range(3, 9):
        assert P(d, 2.0).two_sharp < P(d, 2.0).two_star
    assert P(3, 2.0).is_log and not P(3, 2.5).is_log
    with pytest.raises(DomainError):
        P(3, 6.0)


def test_gamma_ratio_oracles():
    assert sp.gamma_ratio(P(3, 2.0), 5, 1.5) == pytest.approx(1.0, abs=1e-14)
    for x in (0.7, 1.2, 2.5):
        assert sp.gamma_ratio(P(3, 2.0), 1, x) == pytest.approx((3 - x) / x, rel=1e-13)
    assert sp.gamma_ratio(P(3, 2.0), 2, 1.0) == pytest.approx(3.0, rel=1e-13)
    assert sp.gamma_ratio(P(3, 2.0), 4, 1.0) > 1.0 > sp.gamma_ratio(P(3, 2.0), 4, 2.0)
    with pytest.raises(DomainError):
        sp.gamma_ratio(P(3, 2.0), 2, 0.4)


@pytest.mark.parametrize("d,p", [(1, 3.0), (2, 1.5), (3, 4.0), (5, 3.0)])
def test_zeta_closed_forms(d, p):
    assert sp.zeta_j(P(d, p), 1) == pytest.approx(1.0, rel=1e-13)
    assert sp.zeta_j(P(d, p), 2) == pytest.approx(p * (d + 1) / (d + p), rel=1e-13)


def test_zeta_specific_and_errors():
    assert sp.zeta_j(P(3, 4.0), 2) == pytest.approx(16 / 7, rel=1e-13)
    with pytest.raises(DomainError):
        sp.zeta_j(P(3, 2.0), 2)


def test_zeta_increasing_in_p_and_limit_at_two():
    for d in (1, 3, 5):
        ps = [p for p in sp.p_grid(d, 20, include_log=False) if p != 2.0]
        for j in (2, 3, 7):
            z = [sp.zeta_j(P(d, p), j) for p in ps]
            assert np.all(np.diff(z) > 0)
            lim = d / 2 * sp.eta_j(d, j)
            for p in (2 - 1e-6, 2 + 1e-6):
                assert abs(sp.zeta_j(P(d, p), j) - lim) <= 1e-4


def test_eta():
    for d in range(1, 6):
        assert sp.eta_j(d, 1) == pytest.approx(2 / d, rel=1e-13)
        assert sp.eta_j(d, 2) == pytest.approx(4 * (d + 1) / (d * (d + 2)), rel=1e-13)
        for j in range(2, 60):
            e = sp.eta_j(d, j)
            assert sp.eta_j(d, 2) - 1e-14 <= e <= 2 * sp.lambda_j(d, j) / (d * (d + 2)) + 1e-12
            assert sp.eta_j(d, j + 1) / sp.lambda_j(d, j + 1) < e / sp.lambda_j(d, j)
    assert sp.eta_j(2, 3) == pytest.approx(11 / 6, rel=1e-13)


def test_lambda():
    assert sp.lambda_j(4, 0) == 0 and sp.lambda_j(4, 1) == 4 and sp.lambda_j(3, 2) == 8
    assert isinstance(sp.lambda_j(3, 5), int)


def test_xi_family_examples():
    xi, xs, h = sp.xi_family(P(3, 2.0), 2, 1.0)
    assert xi == pytest.approx(0.25, rel=1e-13)
    xi, xs, h = sp.xi_family(P(4, 2.0), 6, 2.0)
    assert xi == pytest.approx(0.0, abs=1e-15) and xs == 0.0
    a = sp.xi_family(P(4, 2.0), 5, 1.7)
    b = sp.xi_family(P(4, 2.0), 6, 1.7)
    assert 0 < a[2] < 1
    assert abs(b[0] - (a[2] * a[0] + (1 - a[2]) * a[1])) <= 1e-12


def test_improved_constant():
    assert sp.improved_constant(P(3, 3.0), 1) == pytest.approx(0.25, abs=1e-14)
    assert sp.improved_constant(P(2, 2.0), 1) == pytest.approx(0.5, abs=1e-14)
    for d in range(1, 6):
        assert sp.improved_constant_k1(d, 1.0) == pytest.approx((d + 2) / (2 * (d + 1)), rel=1e-14)
        for p in sp.p_grid(d, 8):
            cs = [sp.improved_constant(P(d, p), k) for k in range(1, 12)]
            assert all(0 < c < 1 for c in cs)
            # zeta_j / lambda_j decreases in j, so the constant grows with k
            assert np.all(np.diff(cs) >= -1e-14)
    with pytest.raises(DomainError):
        sp.improved_constant(P(3, 3.0), 0)


def test_p_grid():
    g = sp.p_grid(3, 10)
    assert len(g) == 11 and 2.0 in g and max(g) < 6.0 and min(g) > 1.0
    assert max(sp.p_grid(1, 10, p_max=8.0)) < 8.0
