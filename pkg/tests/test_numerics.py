import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from borelsum.chebyshev import ChebInterpolant
from borelsum.exceptions import ValidationError
from borelsum.expr import CoefficientFunction, parse_expression
from borelsum.taylor import Jet, jet_solve


def test_jet_arithmetic_matches_taylor_series():
    x = Jet.variable(np.array([0.5]), 8)
    f = (x * x + 1).reciprocal()
    # derivatives of 1/(1+x^2) at 0.5 via the series of the composite
    h = 1e-3
    g = lambda t: 1 / (1 + t * t)
    assert f.value[0] == pytest.approx(g(0.5))
    assert f.c[0, 1] == pytest.approx((g(0.5 + h) - g(0.5 - h)) / (2 * h), rel=1e-6)


def test_jet_exp_log_inverse():
    x = Jet.variable(np.array([1.3, 2.0]), 10)
    y = (x.log()).exp()
    np.testing.assert_allclose(y.c, x.c, atol=1e-13)


def test_jet_deriv_shifts_coefficients():
    x = Jet.variable(np.array([2.0]), 6)
    cube = x ** 3
    d = cube.deriv()
    assert d.value[0] == pytest.approx(12.0)
    # 3 (2 + t)^2 = 12 + 12 t + 3 t^2
    np.testing.assert_allclose(d.c[0, :3], [12.0, 12.0, 3.0], atol=1e-13)


def test_jet_solve_against_series_division():
    rng = np.random.default_rng(1)
    L = 6
    A = rng.normal(size=(4, 2, 2, L))
    A[..., 0] += 3 * np.eye(2)
    Xtrue = rng.normal(size=(4, 2, L))
    B = np.zeros_like(Xtrue)
    for k in range(L):
        for j in range(k + 1):
            B[..., k] += np.einsum("pij,pj->pi", A[..., j], Xtrue[..., k - j])
    np.testing.assert_allclose(jet_solve(A, B), Xtrue, atol=1e-12)


@pytest.mark.parametrize("src,x,val", [
    ("1/x", 2.0, 0.5), ("-x^2", 3.0, -9.0), ("2**3", 0.0, 8.0), ("exp(x) - log(x)", 1.0, math.e),
    ("(1+2j)*x", 1.0, 1 + 2j), ("pi*x", 1.0, math.pi), ("1e-3 * x", 2.0, 2e-3),
])
def test_expression_values(src, x, val):
    assert CoefficientFunction(src)(x) == pytest.approx(val)


@pytest.mark.parametrize("bad", ["x^", "sin(x)", "x^x", "1/(x", "", "x^0.5"])
def test_expression_errors(bad):
    with pytest.raises(ValidationError):
        CoefficientFunction(bad)


def test_expression_derivative_symbolic():
    f = CoefficientFunction("x^3 * exp(2*x)")
    d2 = f.derivative(2)
    x = 0.7
    ref = (6 * x + 12 * x ** 2 + 4 * x ** 3) * math.exp(2 * x)
    assert d2(x) == pytest.approx(ref, rel=1e-13)
    assert CoefficientFunction("0*x").is_zero


def test_expression_jet_matches_derivatives():
    f = CoefficientFunction("1/x")
    jet = f.jet(np.array([2.0]), 6)
    for n in range(6):
        assert jet.c[0, n] == pytest.approx((-1) ** n / 2.0 ** (n + 1), rel=1e-13)


def test_chebyshev_interpolation_and_calculus():
    f = ChebInterpolant.from_function(np.exp, 0.0, 1.0, 24)
    xs = np.linspace(0, 1, 11)
    np.testing.assert_allclose(f(xs), np.exp(xs), atol=1e-14)
    np.testing.assert_allclose(f.derivative()(xs), np.exp(xs), atol=1e-11)
    F = f.antiderivative(0.3)
    np.testing.assert_allclose(F(xs), np.exp(xs) - np.exp(0.3), atol=1e-13)
    assert f(f.nodes[3]) == f.values[3]


def test_chebyshev_complex_segment_and_vector_values():
    a, b = 1.0, 1.0 + 1.0j
    f = ChebInterpolant.from_function(lambda z: np.array([1 / z, z ** 2]), a, b, 32)
    z = 1.0 + 0.4j
    np.testing.assert_allclose(f(z), [1 / z, z ** 2], atol=1e-13)
    assert f.contains(z) and not f.contains(2.0)
    with pytest.raises(ValueError):
        ChebInterpolant(1.0, 1.0, np.ones(3))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=6))
def test_chebyshev_reproduces_polynomials(coeffs):
    p = np.polynomial.Polynomial(coeffs)
    f = ChebInterpolant.from_function(p, -1.0, 3.0, len(coeffs) + 2)
    xs = np.linspace(-1, 3, 7)
    np.testing.assert_allclose(f(xs).real, p(xs), atol=1e-10 * (1 + np.max(np.abs(coeffs))) * 100)
