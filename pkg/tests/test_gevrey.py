import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from borelsum.exceptions import ConvergenceError
from borelsum.gevrey import (certify_bound, functional_equation_residual, gevrey_fit, ift_radius,
                             majorant_sequence)

TSTAR = (math.sqrt(2) - 1) / 2


def test_gevrey_fit_factorial_sequences():
    n = np.arange(16)
    fact = np.array([math.factorial(k) for k in n], dtype=float)
    assert gevrey_fit(fact).M == pytest.approx(1.0)
    assert gevrey_fit(fact).C == pytest.approx(1.0)
    assert gevrey_fit(2.0 ** n * fact).M == pytest.approx(2.0)
    fit = gevrey_fit(np.ones(16))
    assert "convergent" in fit.flags and fit.holds(np.ones(16))
    assert "all_zero" in gevrey_fit(np.zeros(8)).flags
    with pytest.raises(ValueError):
        gevrey_fit([1.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.1, 10.0))
def test_gevrey_fit_bound_always_holds(M, C):
    n = np.arange(12)
    norms = C * M ** n * np.array([math.factorial(k) for k in n]) * (1 + 0.3 * np.sin(n))
    fit = gevrey_fit(norms)
    assert fit.holds(norms, rtol=1e-10)


def test_borel_majorant_known_values():
    seq = majorant_sequence("borel", {"B": 1.0, "C": 1.0}, 6)
    np.testing.assert_allclose(seq.values[:4], [1, 2, 4, 12])


def test_borel_radius_closed_form():
    r = ift_radius("borel", {"B": 1.0, "C": 1.0})
    assert r.tstar == pytest.approx(TSTAR, rel=1e-10)
    assert ift_radius("borel", {"B": 1.0, "C": 0.0}).flags == ["infinite_radius"]


def test_borel_majorant_ratio_and_certificate():
    seq = majorant_sequence("borel", {"B": 1.0, "C": 1.0}, 40)
    cert = certify_bound(seq)
    assert cert.passed
    assert cert.ratio_error < 0.05


@pytest.mark.parametrize("variant,params", [("borel", {"B": 0.7, "C": 2.0}),
                                            ("formal", {"A": 3.0, "B": 0.5})])
def test_functional_equation_residual(variant, params):
    seq = majorant_sequence(variant, params, 30)
    assert np.max(np.abs(functional_equation_residual(seq))) < 1e-12


@pytest.mark.parametrize("variant,params,N", [("borel", {"B": 0.7, "C": 1.5}, 3),
                                              ("formal", {"A": 3.0, "B": 0.4}, 2)])
def test_direct_and_collapsed_recursions_agree(variant, params, N):
    fast = majorant_sequence(variant, params, 6, N=N)
    slow = majorant_sequence(variant, params, 6, N=N, direct=True)
    np.testing.assert_allclose(fast.values, slow.values, rtol=1e-13)


def test_rescaling_on_overflow():
    seq = majorant_sequence("borel", {"B": 50.0, "C": 50.0}, 200)
    assert "rescaled" in seq.flags
    assert np.all(np.isfinite(seq.log_values))
    assert np.max(np.abs(functional_equation_residual(seq))) < 1e-10


def test_majorant_argument_errors():
    with pytest.raises(ValueError):
        majorant_sequence("other", {}, 3)
    with pytest.raises(ValueError):
        majorant_sequence("borel", {"B": -1.0, "C": 1.0}, 3)
    assert "A_below_3" in majorant_sequence("formal", {"A": 2.0, "B": 0.1}, 3).flags
