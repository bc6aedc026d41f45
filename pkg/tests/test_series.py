import itertools
import math
import operator

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from borelsum.series import (HbarSeries, PowerCache, Poly, RayGridFunction, XiSeries,
                             discrete_convolution, enumerate_multi_indices, formal_borel,
                             power_product_coeff, power_product_sum, rho, trapezoid_convolve,
                             truncated_compose, unit_index)


def test_multi_index_order_and_count():
    assert enumerate_multi_indices(2, 1) == [(1, 0), (0, 1)]
    assert enumerate_multi_indices(3, 0) == [(0, 0, 0)]
    for N in range(1, 5):
        for m in range(7):
            idx = enumerate_multi_indices(N, m)
            assert len(idx) == math.comb(m + N - 1, N - 1)
            assert len(set(idx)) == len(idx)
            assert sum(rho(N, m) for _ in idx) == pytest.approx(1.0)


def test_multi_index_rejects_bad_input():
    with pytest.raises(ValueError):
        enumerate_multi_indices(0, 2)
    with pytest.raises(ValueError):
        enumerate_multi_indices(2, -1)


def test_power_cache_binomial():
    # (1 + t)^p has binomial coefficients
    cache = PowerCache([1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    for p in range(6):
        assert [cache.coeff(p, q) for q in range(7)] == [math.comb(p, q) for q in range(7)]


def test_power_cache_order_out_of_range():
    with pytest.raises(IndexError):
        PowerCache([1.0, 2.0]).coeff(2, 5)


def test_power_product_trivial_cases():
    table = [[1.0, 2.0, 3.0]]
    assert power_product_coeff(table, (0,), (0,)) == 1
    assert power_product_coeff(table, (0,), (1,)) == 0
    with pytest.raises(ValueError):
        power_product_coeff(table, (1,), (1, 0))


def _brute(table, m, n):
    out = 1.0
    for row, mj, nj in zip(table, m, n):
        if mj == 0:
            if nj:
                return 0.0
            continue
        out *= sum(np.prod([row[p] for p in parts])
                   for parts in itertools.product(range(nj + 1), repeat=mj) if sum(parts) == nj)
    return out


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_power_product_matches_brute_force(N, seed):
    rng = np.random.default_rng(seed)
    table = rng.normal(size=(N, 7))
    m = tuple(int(v) for v in rng.integers(0, 4, size=N))
    n = tuple(int(v) for v in rng.integers(0, 7, size=N))
    assert power_product_coeff(table, m, n) == pytest.approx(_brute(table, m, n), rel=1e-10, abs=1e-12)


def test_power_product_sum_is_series_coefficient():
    a = np.array([0.5, -1.0, 2.0, 0.3, 0.0])
    b = np.array([1.5, 0.2, -0.7, 0.0, 1.0])
    caches = [PowerCache(a), PowerCache(b)]
    # coefficient of ħ^q in a(ħ)^2 b(ħ)
    full = np.convolve(np.convolve(a, a), b)
    for q in range(5):
        assert power_product_sum(caches, (2, 1), q) == pytest.approx(full[q])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 12), st.integers(0, 12), st.floats(0.1, 3.0))
def test_xi_convolution_monomial_law(a, b, xi):
    ea = XiSeries([0] * a + [1 / math.factorial(a)])
    eb = XiSeries([0] * b + [1 / math.factorial(b)])
    got = ea.convolve(eb)
    assert got(xi) == pytest.approx(xi ** (a + b + 1) / math.factorial(a + b + 1), rel=1e-12)


def test_formal_borel_and_laplace_round_trip():
    s = HbarSeries([0.0, 1.0, -2.0, 6.0, 3.0])
    phi, f0 = formal_borel(s)
    assert f0 == 0.0
    assert phi.coeffs == (1.0, -2.0, 3.0, 0.5)
    assert phi.laplace().coeffs == s.coeffs


def test_hbar_series_arithmetic():
    a, b = HbarSeries([1, 2, 3]), HbarSeries([0, 1])
    assert (a * b).coeffs == (0, 1)
    assert (a + b).coeffs == (1, 3)
    assert a(0.5) == pytest.approx(1 + 1 + 0.75)
    with pytest.raises(ValueError):
        HbarSeries([])


def test_trapezoid_convolve_exact_for_linear_product():
    # ∫_0^ξ (ξ - y) dy = ξ²/2; trapezoid is exact for linear integrands
    xi = np.linspace(0, 2, 41)
    h = xi[1]
    out = trapezoid_convolve(xi, np.ones_like(xi), h)
    np.testing.assert_allclose(out, xi ** 2 / 2, atol=1e-14)
    assert out[0] == 0


@pytest.mark.parametrize("T", [10, 200])
def test_trapezoid_convolve_direct_matches_fft(T):
    rng = np.random.default_rng(T)
    a = rng.normal(size=(3, T)) + 1j * rng.normal(size=(3, T))
    b = rng.normal(size=(3, T))
    d = trapezoid_convolve(a, b, 0.1, method="direct")
    f = trapezoid_convolve(a, b, 0.1, method="fft")
    np.testing.assert_allclose(d, f, atol=1e-12)


def test_trapezoid_convolve_second_order():
    errs = []
    for T in (50, 100, 200):
        xi = np.linspace(0, 1, T + 1)
        out = trapezoid_convolve(np.exp(xi), np.cos(xi), xi[1])
        # ∫_0^ξ e^{ξ-y} cos y dy
        ref = 0.5 * (np.exp(xi) + np.sin(xi) - np.cos(xi))
        errs.append(np.max(np.abs(out - ref)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9)


def test_discrete_convolution_checks_spacing():
    a = RayGridFunction(np.ones(5), 0.1)
    b = RayGridFunction(np.ones(5), 0.2)
    with pytest.raises(ValueError):
        discrete_convolution(a, b)
    c = discrete_convolution(a, RayGridFunction(np.ones(5), 0.1))
    np.testing.assert_allclose(c.values, 0.1 * np.arange(5), atol=1e-15)


def test_poly_compose_matches_direct_expansion():
    # outer = y0^2 + ħ y1, inner: y0 = 1 + ħ w0, y1 = w1
    inner = [Poly(2, {(0, (0, 0)): 1.0, (1, (1, 0)): 1.0}), Poly(2, {(0, (0, 1)): 1.0})]
    out = truncated_compose({(0, (2, 0)): 1.0, (1, (0, 1)): 1.0}, inner)
    for hb, w in [(0.3, (0.2, -1.0)), (-0.7, (1.5, 2.0))]:
        assert out(hb, w) == pytest.approx((1 + hb * w[0]) ** 2 + hb * w[1])


def test_poly_truncation_order_guard():
    inner = [Poly(1, {(0, (0,)): 1.0, (1, (1,)): 1.0}, order=2)]
    with pytest.raises(ValueError):
        truncated_compose({(0, (3,)): 1.0}, inner, order=4)
    out = truncated_compose({(0, (3,)): 1.0}, inner, order=2)
    assert max(k for k, _ in out.terms) == 2
    assert out.coefficient(2, (2,)) == pytest.approx(3.0)


def test_unit_index():
    assert unit_index(3, 1) == (0, 1, 0)
