"""Acceptance criteria, one test each, at their stated tolerances.

The terminal summary (see conftest.py) prints a PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest

from borelsum import borel as B
from borelsum.cli import ode_residual
from borelsum.estimator import BorelLaplaceSolver
from borelsum.formal import formal_solution, jacobian_J0
from borelsum.gevrey import certify_bound, gevrey_fit, ift_radius, majorant_sequence
from borelsum.problem import load_problem
from borelsum.oracles import (oracle_forced_linear, oracle_linear, oracle_riccati,
                              run_property_suite)


@pytest.fixture(scope="module")
def riccati(problems_dir):
    return BorelLaplaceSolver().fit(problems_dir / "riccati.ini")


@pytest.fixture(scope="module")
def linear():
    lin = oracle_linear()
    return lin, BorelLaplaceSolver().fit(lin.spec)


def _engine(spec, xi_max, steps):
    sol = formal_solution(spec, nmax=6)
    spectral = B.diagonalize_field(jacobian_J0(spec, sol.coeffs[0]), spec.x0)
    std = B.standard_form(spec, sol, spectral)
    maps = [B.liouville_map(spectral.phi.component(i), spec.x0, spec.theta) for i in range(spec.N)]
    return B.borel_data(std, maps, B.make_geometry(maps, xi_max, xi_max / steps), spec.theta)


def test_c01_formal_recursion_vs_symbolic():
    t0 = time.perf_counter()
    lin = oracle_linear(window=(1.0, 2.0))
    sol = formal_solution(lin.spec, nmax=12)
    x = sol.nodes.real
    err = 0.0
    for n in range(13):
        ref = (-1) ** n * math.factorial(n) * x ** (-n - 1)
        err = max(err, float(np.max(np.abs(sol.coeffs[n].values[:, 0] - ref) / np.abs(ref))))
    elapsed = time.perf_counter() - t0
    print(f"criterion 1: max relative error {err:.2e}, {elapsed:.2f} s")
    assert err <= 1e-10 and elapsed < 10


def test_c02_nonlinear_recursion_vs_substitution():
    ric = oracle_riccati(window=(1.0, 2.0), order=6)
    sol = formal_solution(ric.spec, nmax=6)
    x = sol.nodes.real
    f1 = sol.coeffs[1].values[:, 0]
    assert np.max(np.abs(f1 - (-1 / x ** 2 - 1 / x ** 2))) <= 1e-9
    err = 0.0
    for n in range(7):
        ref = np.broadcast_to(ric.f_numeric(n)(x), x.shape)
        err = max(err, float(np.max(np.abs(sol.coeffs[n].values[:, 0] - ref))))
    print(f"criterion 2: max error through order 6 {err:.2e}")
    assert err <= 1e-9


def test_c03_gevrey_fit_linear():
    sol = formal_solution(oracle_linear().spec, nmax=12)
    fit = gevrey_fit(sol.norms_at(1.0))
    print(f"criterion 3: M = {fit.M:.6f}, C = {fit.C:.6f}")
    assert abs(fit.M - 1.0) <= 0.15
    assert fit.holds(sol.norms_at(1.0))


def test_c04_majorant_certification():
    params = {"B": 1.0, "C": 1.0}
    seq = majorant_sequence("borel", params, 40, 1)
    radius = ift_radius("borel", params)
    cert = certify_bound(seq, radius)
    tstar = (math.sqrt(2) - 1) / 2
    print(f"criterion 4: t* = {radius.tstar:.15f} (closed form {tstar:.15f}), "
          f"ratio gap at n = 40 {cert.ratio_error:.3e}")
    assert radius.tstar == pytest.approx(tstar, rel=1e-10)
    assert cert.ratio_error <= 0.05
    assert cert.bound_holds


def test_c05_borel_engine_order_and_schemes(problems_dir):
    ref = oracle_forced_linear()
    steps = [64, 128, 256, 512]
    hs, errs = [], []
    for s in steps:
        data = _engine(ref.spec, 2.0, s)
        g = data.geometry
        fld = B.volterra_march(data)
        Z, XI = np.meshgrid(g.z, g.xi, indexing="ij")
        errs.append(float(np.max(np.abs(fld.S[0] - ref.sigma(Z, XI))[g.valid_mask()])))
        hs.append(g.h)
    hs, errs = np.array(hs), np.array(errs)
    C = 1.05 * errs[0] / hs[0] ** 2
    orders = np.log2(errs[:-1] / errs[1:])
    # linear oracle: the march is exact at the nodes
    lin = oracle_linear()
    data = _engine(lin.spec, 2.0, 256)
    g = data.geometry
    fld = B.volterra_march(data)
    Z, XI = np.meshgrid(g.z, g.xi, indexing="ij")
    lin_err = float(np.max(np.abs(fld.S[0] - lin.sigma(Z, XI))[g.valid_mask()]))
    # successive approximations vs march
    tol = 1e-10
    diffs = []
    for spec in (ref.spec, lin.spec, load_problem(problems_dir / "riccati.ini")):
        data = _engine(spec, 2.0, 128)
        fld = B.volterra_march(data)
        res = B.successive_approximations(data, tol=tol, march=fld, check=False)
        diffs.append(res.march_difference / max(1.0, float(np.max(np.abs(fld.S)))))
    print(f"criterion 5: errors {errs}, orders {orders}, C = {C:.4g}, linear sup error {lin_err:.2e}, "
          f"scheme gaps {diffs}")
    assert np.all(errs <= C * hs ** 2) and np.all(orders >= 1.9)
    assert lin_err <= C * hs[2] ** 2
    assert max(diffs) <= 10 * tol


def test_c05b_schemes_agree_on_riccati(riccati):
    # the fitted estimator cross-checks both schemes on its 2h grid
    res = riccati.successive_
    scale = max(1.0, float(np.max(np.abs(riccati.coarse_field_.S))))
    print(f"criterion 5 (Riccati): successive vs march {res.march_difference:.3e} over {res.n_terms} terms")
    assert res.march_difference <= 10 * riccati.tol * scale


def test_c06_per_term_bound(linear, riccati):
    worst = []
    for est in (linear[1], riccati):
        c, M, G = est.term_bound_check(20)
        ok = ~np.isnan(c)
        worst.append((float(np.max(c[ok] / np.where(M[ok] > 0, M[ok], np.inf), initial=0.0)),
                      float(np.max(c[ok] / G[ok]))))
        assert np.all(c[ok] <= M[ok] * (1 + 1e-12))
        assert np.all(c[ok] <= G[ok] * (1 + 1e-12))
    assert riccati.successive_.n_terms >= 20
    print(f"criterion 6: max c_n/M_n and c_n/(D t*^-n) per problem {worst}")


def test_c07_resummation_correctness(linear, riccati):
    lo, hi = riccati.realized_range()
    xs = np.linspace(lo.real, hi.real, 12)[1:-1]
    res = max(ode_residual(riccati, x, hb) for x in xs for hb in (0.05, 0.1))
    lin, est = linear
    lo, hi = est.realized_range()
    gap = max(abs(est.predict([[x, hb]])[0, 0] - lin.resummed(x, hb))
              for x in np.linspace(lo.real, hi.real, 12)[1:-1] for hb in (0.05, 0.1))
    print(f"criterion 7: Riccati ODE residual {res:.2e}, linear vs quadrature {gap:.2e}")
    assert res <= 1e-6 and gap <= 1e-8


def test_c08_gevrey_remainder_on_three_rays(riccati):
    worst = 0.0
    for x in (1.5, 2.5, 3.5):
        fit = gevrey_fit(riccati.formal_.norms_at(x))
        for arg in (-math.pi / 3, 0.0, math.pi / 3):
            for r in (0.02, 0.05, 0.08):
                hb = r * np.exp(1j * arg)
                rv = riccati.resum([x], [hb])[0][0]
                for n in range(1, 9):
                    rem = float(np.max(np.abs(rv.value - riccati.formal_.partial_sum(x, hb, n - 1))))
                    bound = fit.C * fit.M ** n * math.factorial(n) * r ** n
                    worst = max(worst, (rem - rv.error) / bound)
                    assert rem <= bound + rv.error
    print(f"criterion 8: max (remainder - budget) / (C M^n n! |ħ|^n) = {worst:.3f}")


def test_c09_grid_refinement(problems_dir, riccati):
    xi = riccati.xi_max_
    path = problems_dir / "riccati.ini"
    a = BorelLaplaceSolver(xi_max=xi, grid_h=xi / 256, cross_check=False).fit(path)
    b = BorelLaplaceSolver(xi_max=xi, grid_h=xi / 512, cross_check=False).fit(path)
    worst = 0.0
    for x in (1.3, 2.0, 3.0, 4.0):
        for hb in (0.05, 0.1, 0.08 * np.exp(0.6j)):
            X = [[x, hb]]
            d = float(np.max(np.abs(a.predict(X) - b.predict(X))))
            budget = float(a.predict_error(X).sum() + b.predict_error(X).sum())
            worst = max(worst, d / budget)
            assert d <= budget
    print(f"criterion 9: max gap / combined budget = {worst:.3f}")


def test_c10_property_suite():
    t0 = time.perf_counter()
    report = run_property_suite(seed=0)
    elapsed = time.perf_counter() - t0
    print(f"criterion 10: {len(report.cases)} cases, {len(report.failures)} failures, {elapsed:.2f} s")
    print(report.summary())
    assert len(report.cases) >= 1000
    assert report.passed and elapsed < 60
