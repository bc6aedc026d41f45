import csv
import math

import numpy as np
import pytest

from borelsum import borel as B
from borelsum.chebyshev import ChebInterpolant
from borelsum.exceptions import EigenvalueCollision, TurningPointError, ValidationError
from borelsum.formal import formal_solution, jacobian_J0
from borelsum.oracles import oracle_forced_linear, oracle_linear
from borelsum.problem import load_problem, parse_problem


def engine(spec, xi_max=2.0, steps=128, nmax=6):
    sol = formal_solution(spec, nmax=nmax)
    spectral = B.diagonalize_field(jacobian_J0(spec, sol.coeffs[0]), spec.x0)
    std = B.standard_form(spec, sol, spectral)
    maps = [B.liouville_map(spectral.phi.component(i), spec.x0, spec.theta) for i in range(spec.N)]
    geo = B.make_geometry(maps, xi_max, xi_max / steps)
    data = B.borel_data(std, maps, geo, spec.theta)
    return sol, spectral, std, maps, data


def test_integral_operator_exact_on_linear_integrand():
    h, J, T = 0.05, 60, 20
    z = h * np.arange(J + 1)[:, None]
    xi = h * np.arange(T + 1)[None, :]
    alpha = z + xi + 0 * xi
    out = B.integral_operator(alpha, h)
    mask = (np.arange(J + 1)[:, None] + np.arange(T + 1)[None, :]) <= J
    np.testing.assert_allclose(out[mask], (-(z + xi) * xi * np.ones_like(out))[mask], atol=1e-13)
    assert np.all(out[~mask] == 0)
    with pytest.raises(ValueError):
        B.integral_operator(np.ones((5, 10)), h)


def test_diagonalize_matches_known_eigenvalues():
    a, b = 1.0, 2.0
    nodes = ChebInterpolant.nodes_for(a, b, 16)
    J0 = ChebInterpolant(a, b, np.array([[[x, 1.0], [0.0, 3.0]] for x in nodes]))
    sp = B.diagonalize_field(J0, 1.0)
    phi = sp.phi.values
    assert np.allclose(np.sort(phi.real, axis=1), np.stack([nodes.real, 3 + 0 * nodes.real], 1))
    K = sp.P.values @ J0.values @ sp.Pinv.values
    np.testing.assert_allclose(K, np.einsum("ni,ij->nij", phi, np.eye(2)), atol=1e-12)
    # continuous branches: no jump larger than the node spacing allows
    assert sp.max_jump < 0.2


def test_eigenvalue_collision_raises():
    nodes = ChebInterpolant.nodes_for(1.0, 2.0, 16)
    J0 = ChebInterpolant(1.0, 2.0, np.array([[[x, 0.0], [0.0, 3.0 - x]] for x in nodes]))
    with pytest.raises(EigenvalueCollision):
        B.diagonalize_field(J0, 1.0)


def test_standard_form_linear_and_riccati(problems_dir):
    lin = oracle_linear()
    _, _, std, _, _ = engine(lin.spec)
    (key, fn), = std.table.items()
    assert key == (0, 0, (0,))
    x = fn.nodes.real
    np.testing.assert_allclose(fn.values, -2 / x ** 3, rtol=1e-12)
    # Riccati: G = 2g(f1 + w) - f1' + ħ (f1 + w)^2 with g = 1/x, f1 = -2/x^2
    _, _, std, _, _ = engine(load_problem(problems_dir / "riccati.ini"))
    x = 2.3
    g, f1, df1 = 1 / x, -2 / x ** 2, 4 / x ** 3
    for hb, w in [(0.1, 0.3), (-0.2, 1.1)]:
        ref = 2 * g * (f1 + w) - df1 + hb * (f1 + w) ** 2
        assert std.evaluate(x, hb, [w])[0] == pytest.approx(ref, rel=1e-11)
    assert std.cancellation < 1e-10 and not std.coupled


def test_liouville_map_and_inverse():
    phi = ChebInterpolant.from_function(lambda x: np.array([2.0 + 0 * x]), 1.0, 3.0, 8)
    lm = B.liouville_map(phi.component(0), 1.0)
    assert lm(2.0) == pytest.approx(2.0)
    assert lm.inverse(3.0) == pytest.approx(2.5)
    assert lm.extent == pytest.approx((0.0, 4.0))


def test_liouville_rejects_non_monotone_and_zero():
    phi = ChebInterpolant.from_function(lambda x: np.exp(1j * math.pi * x), 0.0, 2.0, 48)
    with pytest.raises(ValidationError, match="not monotone"):
        B.liouville_map(phi, 0.0)
    phi = ChebInterpolant.from_function(lambda x: x - 1.5, 1.0, 2.0, 8)
    with pytest.raises(TurningPointError):
        B.liouville_map(phi, 1.0)


def test_window_too_short():
    _, _, _, maps, _ = engine(oracle_linear(window=(1.0, 2.0)).spec, xi_max=0.5)
    with pytest.raises(ValidationError, match="window too short"):
        B.make_geometry(maps, 2.0, 0.01)


def test_linear_march_is_exact_at_nodes():
    lin = oracle_linear()
    *_, data = engine(lin.spec)
    fld = B.volterra_march(data)
    g = data.geometry
    Z, XI = np.meshgrid(g.z, g.xi, indexing="ij")
    mask = g.valid_mask()
    assert np.max(np.abs(fld.S[0] - lin.sigma(Z, XI))[mask]) < 1e-13
    res = B.successive_approximations(data, march=fld)
    assert res.n_terms == 1 and res.march_difference < 1e-13


def test_forced_linear_second_order():
    ref = oracle_forced_linear()
    errs = []
    for steps in (64, 128, 256):
        *_, data = engine(ref.spec, steps=steps)
        g = data.geometry
        fld = B.volterra_march(data)
        Z, XI = np.meshgrid(g.z, g.xi, indexing="ij")
        errs.append(np.max(np.abs(fld.S[0] - ref.sigma(Z, XI))[g.valid_mask()]))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9)


def test_riccati_schemes_agree_and_residual_shrinks(problems_dir):
    spec = load_problem(problems_dir / "riccati.ini")
    resid = []
    for steps in (64, 128):
        *_, data = engine(spec, steps=steps)
        fld = B.volterra_march(data)
        res = B.successive_approximations(data, tol=1e-10, march=fld)
        assert res.march_difference <= 1e-9 * max(1.0, np.max(np.abs(fld.S)))
        resid.append(B.pde_residual(fld))
    assert resid[1] < 0.5 * resid[0]


def test_successive_terms_respect_majorant(problems_dir):
    from borelsum.gevrey import majorant_sequence
    *_, data = engine(load_problem(problems_dir / "riccati.ini"))
    res = B.successive_approximations(data)
    c = B.majorant_constants(data)
    M = majorant_sequence("borel", {"B": c["B"], "C": c["C"]}, res.n_terms).values
    k = min(21, res.n_terms + 1)
    ok = np.isnan(res.term_constants[:k]) | (res.term_constants[:k] <= M[:k] * (1 + 1e-12))
    assert np.all(ok)


def test_zero_standard_form_gives_zero_field():
    spec = parse_problem("""
[system]
N = 1
[coefficients]
1,0,1 = 1
1,0,0 = -2
[basepoint]
x0 = 1
y0 = 2
[window]
a = 1
b = 4
""")
    *_, data = engine(spec)
    assert data.a[0] == {} and data.alpha[0] == {}
    res = B.successive_approximations(data)
    assert np.all(res.field.S == 0) and res.n_terms == 1 and res.tail == 0


def test_decoupled_system_matches_scalar_runs(problems_dir):
    spec2 = load_problem(problems_dir / "decoupled2.ini")
    *_, data2 = engine(spec2, steps=64)
    assert not data2.flags
    fld2 = B.volterra_march(data2)
    # component 1 is the linear oracle
    lin = oracle_linear()
    g = data2.geometry
    Z, XI = np.meshgrid(g.z, g.xi, indexing="ij")
    assert np.max(np.abs(fld2.S[0] - lin.sigma(Z, XI))[g.valid_mask()]) < 1e-12
    res = B.successive_approximations(data2, march=fld2)
    assert res.march_difference < 1e-9


def test_taylor_consistency(problems_dir):
    spec = load_problem(problems_dir / "riccati.ini")
    sol, spectral, _, maps, data = engine(spec, steps=256, nmax=8)
    fld = B.volterra_march(data)
    err = B.taylor_consistency(fld, sol, spectral, maps, order=2)
    assert err[0] < 1e-10 and err[1] < 1e-4 and err[2] < 1e-2


def test_growth_fit_and_csv(tmp_path):
    lin = oracle_linear()
    *_, data = engine(lin.spec)
    fld = B.volterra_march(data)
    gr = B.fit_growth(fld.S, data.geometry)
    assert gr.K == 0 and gr.D == pytest.approx(2.0)
    path = tmp_path / "sigma.csv"
    fld.to_csv(path, stride=16)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["comp", "zeta", "t", "re", "im"]
    r = rows[5]
    assert float(r[3]) == pytest.approx(2 / (1 + float(r[1])) ** 3, rel=1e-12)


def test_majorant_constants_linear():
    *_, data = engine(oracle_linear().spec)
    c = B.majorant_constants(data)
    assert c == {"B": 0.0, "C": pytest.approx(2.0), "L": 0.0}
