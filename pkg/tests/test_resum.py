import math

import mpmath as mp
import numpy as np
import pytest

from borelsum.borel import GrowthFit
from borelsum.estimator import BorelLaplaceSolver
from borelsum.exceptions import OutsideDiscError, OutsideWindowError
from borelsum.oracles import oracle_linear
from borelsum.problem import ProblemSpec
from borelsum.resum import BorelDisc, laplace_ray, laplace_weights, required_xi_max, tail_bound
from borelsum.series import RayGridFunction


@pytest.fixture(scope="module")
def linear_fit():
    lin = oracle_linear()
    return lin, BorelLaplaceSolver().fit(lin.spec)


@pytest.mark.parametrize("n", [0, 1, 3, 5])
@pytest.mark.parametrize("hbar", [0.05, 0.1, 0.08 + 0.05j])
def test_monomial_laplace(n, hbar):
    # Laplace of ξ^n/n! is ħ^{n+1}
    h = 40.0 / 2048
    xi = h * np.arange(2049)
    sig = RayGridFunction(xi ** n / math.factorial(n), h)
    rv = laplace_ray(sig, hbar, GrowthFit(1.0, 1.0))
    assert abs(rv.value[0] - hbar ** (n + 1)) <= 1e-12 + rv.quad + rv.tail
    assert abs(rv.value[0] - hbar ** (n + 1)) < 1e-10


def test_weights_exact_for_polynomials_of_panel_degree():
    T, h, hb = 16, 0.1, 0.3
    xi = h * np.arange(T + 1)
    w = laplace_weights(T, h, hb)
    with mp.workdps(30):
        for p in range(5):
            ref = mp.quad(lambda u: mp.exp(-u / hb) * u ** p, [0, T * h])
            assert abs(w @ xi ** p - complex(ref)) < 1e-13
    with pytest.raises(ValueError):
        laplace_weights(10, h, hb)


def test_zero_sigma_has_zero_error():
    rv = laplace_ray(np.zeros(33), 0.1, GrowthFit(0.0, 0.0), h=0.1)
    assert rv.value[0] == 0 and rv.error == 0


def test_disc_and_tail():
    disc = BorelDisc(0.0, 1.0 / 2.05)
    assert disc.contains(0.1) and not disc.contains(-0.1) and not disc.contains(0.0)
    assert not disc.contains(1.0)
    with pytest.raises(OutsideDiscError, match="disc diameter"):
        disc.check(1.0)
    assert math.isinf(tail_bound(GrowthFit(1.0, 2.0), 1.0, 1.0))
    g = GrowthFit(3.0, 1.0)
    xi = required_xi_max(g, [0.1, 0.05], 1e-10)
    assert tail_bound(g, xi, 0.1) == pytest.approx(1e-11, rel=1e-9)
    with pytest.raises(OutsideDiscError):
        required_xi_max(g, [1.0], 1e-10)


@pytest.mark.parametrize("x", [1.3, 2.0, 3.1, 4.4])
@pytest.mark.parametrize("hbar", [0.05, 0.1, 0.06 + 0.06j])
def test_linear_matches_high_precision_quadrature(linear_fit, x, hbar):
    lin, est = linear_fit
    v = est.predict([[x, hbar]])[0, 0]
    err = est.predict_error([[x, hbar]]).sum()
    ref = lin.resummed(x, hbar)
    assert abs(v - ref) <= 1e-8
    assert abs(v - ref) <= err + 1e-13


def test_hbar_to_zero_approaches_leading_order(linear_fit):
    _, est = linear_fit
    x = 2.0
    gaps = [abs(est.predict([[x, hb]])[0, 0] - 1 / x) for hb in (0.04, 0.02, 0.01)]
    # f - f0 = ħ g' + O(ħ²)
    assert gaps[0] / gaps[1] == pytest.approx(2, rel=0.1)
    assert gaps[1] / gaps[2] == pytest.approx(2, rel=0.05)


def test_outside_disc_and_window(linear_fit):
    _, est = linear_fit
    with pytest.raises(OutsideDiscError):
        est.predict([[2.0, -0.1]])
    with pytest.raises(OutsideWindowError, match="realized range"):
        est.predict([[6.9, 0.1]])


def test_rotated_direction_linear():
    theta = 0.5
    rot = complex(np.exp(1j * theta))
    lin = oracle_linear()
    spec = lin.spec
    spec = ProblemSpec(spec.N, spec.coeffs, spec.x0, spec.y0, (1.0, 1.0 + 6.0 * rot), theta, "rotated")
    est = BorelLaplaceSolver().fit(spec)
    for s, r in [(0.8, 0.1), (1.5, 0.05)]:
        x = 1.0 + s * rot
        hb = r * rot * np.exp(0.2j)
        v = est.predict([[x, hb]])[0, 0]
        with mp.workdps(30):
            hr = mp.mpc(hb / rot)
            integral = mp.quad(lambda u: mp.exp(-u / hr) * 2 / (x + rot * u) ** 3 * rot, [0, 1, 4, mp.inf])
        ref = 1 / x - hb / x ** 2 + hb * complex(integral)
        assert abs(v - ref) < 1e-8
