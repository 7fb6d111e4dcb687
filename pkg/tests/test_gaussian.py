import math

import numpy as np
import pytest
from scipy import integrate

from sphere_stability import gaussian as gs
from sphere_stability.errors import DomainError


def test_hermite_basics():
    f = gs.HermiteFn([1.0, 0.0, 0.5])
    assert f.norm2_sq() == pytest.approx(1.25)
    assert f.grad_norm_sq() == pytest.approx(0.5)
    x = np.linspace(-2, 2, 5)
    assert np.allclose(f(x), 1 + 0.5 * (x * x - 1) / math.sqrt(2))
    g = gs.HermiteFn.from_callable(lambda t: 1 + 0.5 * (t * t - 1) / math.sqrt(2), 4)
    assert np.allclose(g.coefficients, [1, 0, 0.5, 0, 0], atol=1e-13)
    assert gs.norm_p(f, 2.0) == pytest.approx(math.sqrt(1.25))
    assert gs.norm_p(gs.HermiteFn([3.0]), 1.3) == pytest.approx(3.0, rel=1e-12)
    with pytest.raises(DomainError):
        gs.HermiteFn([])


def test_norm_p_against_direct_quadrature():
    f = gs.HermiteFn([0.2, 1.0, -0.4, 0.3])
    roots = sorted(r.real for r in np.polynomial.hermite_e.hermeroots(f.coefficients * gs._scale(f.K))
                   if abs(r.imag) < 1e-12)
    dens = lambda x: abs(f(x)) ** 1.5 * math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    ref = sum(integrate.quad(dens, a, b, epsabs=0, epsrel=1e-13, limit=200)[0]
              for a, b in zip([-40.0] + roots, roots + [40.0])) ** (1 / 1.5)
    assert gs.norm_p(f, 1.5) == pytest.approx(ref, rel=1e-11)


def test_ou_semigroup():
    rng = np.random.default_rng(0)
    f = gs.random_hermite(rng, 10, a1_zero=False)
    assert np.array_equal(gs.ou_evolve(f, 0.0).coefficients, f.coefficients)
    a = gs.ou_evolve(gs.ou_evolve(f, 0.3), 0.5).coefficients
    b = gs.ou_evolve(f, 0.8).coefficients
    assert np.max(np.abs(a - b)) <= 1e-12
    e = np.zeros(4)
    e[3] = 1.0
    assert gs.ou_evolve(gs.HermiteFn(e), 0.7).norm2_sq() == pytest.approx(math.exp(-6 * 0.7))


def test_nelson_time_and_mode_constants():
    assert gs.nelson_time(1 + math.exp(-2)) == pytest.approx(1.0, rel=1e-14)
    assert gs.nelson_time(1.0) == math.inf
    assert gs.nelson_time(2 - 1e-9) < 1e-8
    for p in (1.0, 1.3, 1.9):
        assert gs.mode_constant(p, 1) == pytest.approx(1.0)
        vals = [gs.mode_constant(p, k) for k in range(1, 30)]
        assert np.all(np.diff(vals) < 0)
    assert gs.mode_constant(1.0, 2) == 0.5
    assert abs(gs.mode_constant(2 - 1e-7, 5) - 1) <= 1e-6
    with pytest.raises(DomainError):
        gs.mode_constant(2.0, 1)


def test_theorem_b1_examples():
    a = gs.verify_theorem_b1(gs.HermiteFn([2.0]), 1.5)
    assert a.grad_sq == 0 and abs(a.entropy_gap) < 1e-12 and a.passed
    for eps in (0.05, 0.1, 0.3):
        a = gs.verify_theorem_b1(gs.HermiteFn([1.0, 0.0, eps]), 1.5)
        assert a.margin > 0 and a.gross_margin >= -1e-12
    with pytest.raises(DomainError):
        gs.verify_theorem_b1(gs.HermiteFn([1.0, 0.5]), 1.5)


def test_hypercontractivity_small_sample():
    rng = np.random.default_rng(3)
    for _ in range(10):
        lhs, rhs, margin = gs.hypercontractivity_audit(gs.random_positive_hermite(rng), 1.4)
        assert margin >= -1e-12


def test_json():
    f = gs.HermiteFn([1.0, 0.0, 0.25])
    assert f.to_json() == '{"coefficients": [1.0, 0.0, 0.25], "dimension": 1}'
