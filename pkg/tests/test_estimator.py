import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from borelsum.estimator import BorelLaplaceSolver
from borelsum.exceptions import ValidationError
from borelsum.oracles import oracle_linear


@pytest.fixture(scope="module")
def fitted():
    return BorelLaplaceSolver(nmax=8).fit(oracle_linear().spec)


def test_params_roundtrip_and_clone():
    est = BorelLaplaceSolver(nmax=7, tol=1e-9)
    params = est.get_params()
    assert params["nmax"] == 7 and params["tol"] == 1e-9
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(hbar_max=0.2)
    assert est.hbar_max == 0.2


def test_not_fitted():
    with pytest.raises(NotFittedError):
        BorelLaplaceSolver().predict([[1.5, 0.1]])


@pytest.mark.parametrize("kw", [{"nmax": 1}, {"nmax": 2.5}, {"degree": 0}, {"tol": -1.0},
                                {"grid_h": 0.0}, {"hbar_max": True}])
def test_bad_params(kw):
    with pytest.raises(ValidationError):
        BorelLaplaceSolver(**kw).fit(oracle_linear().spec)


def test_fit_from_path_and_text(problems_dir):
    text = (problems_dir / "linear.ini").read_text()
    a = BorelLaplaceSolver(nmax=6).fit(problems_dir / "linear.ini")
    b = BorelLaplaceSolver(nmax=6).fit(text)
    X = [[2.0, 0.1]]
    assert np.allclose(a.predict(X), b.predict(X), rtol=0, atol=1e-15)


def test_degenerate_problem_rejected(problems_dir):
    with pytest.raises(ValidationError):
        BorelLaplaceSolver().fit(problems_dir / "degenerate.ini")


def test_predict_shapes_and_input_checks(fitted):
    X = np.array([[1.5, 0.05], [2.0, 0.1], [3.0, 0.08]])
    assert fitted.predict(X).shape == (3, 1)
    assert fitted.predict([2.0, 0.1]).shape == (1, 1)
    err = fitted.predict_error(X)
    assert err.shape == (3, 3) and np.all(err >= 0)
    with pytest.raises(ValidationError):
        fitted.predict([[2.0, 0.0]])
    with pytest.raises(ValidationError):
        fitted.predict(np.ones((2, 3)))
    with pytest.raises(ValidationError):
        fitted.predict([[np.nan, 0.1]])


def test_fitted_attributes(fitted):
    lo, hi = fitted.realized_range()
    assert lo.real == pytest.approx(1.0) and 2.0 < hi.real < 7.0
    assert fitted.tail_bound(0.1) <= fitted.tol / 10 * (1 + 1e-9)
    assert fitted.xi_max_ >= 4 * fitted.hbar_max
    assert fitted.successive_ is not None and fitted.successive_.march_difference < 1e-12


def test_two_component_system(problems_dir):
    est = BorelLaplaceSolver(nmax=8).fit(problems_dir / "decoupled2.ini")
    out = est.predict([[2.0, 0.05]])
    assert out.shape == (1, 2)
    c, M, G = est.term_bound_check(12)
    ok = ~np.isnan(c)
    assert np.all(c[ok] <= M[ok] * (1 + 1e-12)) and np.all(c[ok] <= G[ok] * (1 + 1e-12))
