"""Formal power-series solution ``f̂ = sum_n f_n(x) ħ^n``.

Order ħ^0 gives ``F_0(x, f_0) = 0``, solved by damped Newton with
continuation from the base point.  Each higher order gives the linear system

    J_0 f_n = ∂_x f_{n-1} - sum_{k <= n} sum_m F_{k m} [ŷ^m]_{n-k} |_{f_n = 0}

with ``J_0 = ∂F_0/∂y`` along ``f_0``.  The coefficients are carried as
Taylor jets at the Chebyshev nodes, so ``∂_x f_{n-1}`` is exact jet
differentiation rather than repeated spectral differentiation (which loses
roughly one digit per order).  The node values are stored as
:class:`ChebInterpolant` objects.
"""

from __future__ import annotations

import csv
import operator
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .chebyshev import ChebInterpolant
from .exceptions import ConvergenceError, TurningPointError, ValidationError
from .problem import ProblemSpec, eval_F, eval_F0_jacobian
from .series import PowerCache, power_product_sum
from .taylor import Jet, jet_solve

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50
SINGULAR_TOL = 1e-9
COND_LIMIT = 1e12
# a double root stalls Newton near sqrt(NEWTON_TOL), so the turning-point
# threshold on the solved branch sits above that level
TURNING_TOL = 1e-5


@dataclass
class NewtonReport:
    x: complex
    residuals: List[float]


def _newton(spec: ProblemSpec, x, y, tol=NEWTON_TOL, maxiter=NEWTON_MAXITER):
    y = np.array(y, dtype=complex)
    F = lambda v: eval_F(spec, x, 0.0, v)
    r = F(y)
    hist = [float(np.linalg.norm(r))]
    for _ in range(maxiter):
        if hist[-1] <= tol * max(1.0, float(np.linalg.norm(y))):
            return y, hist
        J = eval_F0_jacobian(spec, x, y)
        smin = np.linalg.svd(J, compute_uv=False).min()
        if smin < SINGULAR_TOL:
            raise TurningPointError(f"turning point encountered: dF0/dy singular "
                                    f"(min singular value {smin:.2e}) at x = {x}")
        step = np.linalg.solve(J, -r)
        lam = 1.0
        while True:
            y_new = y + lam * step
            r_new = F(y_new)
            if np.linalg.norm(r_new) < hist[-1] or lam < 1e-4:
                break
            lam *= 0.5
        y, r = y_new, r_new
        hist.append(float(np.linalg.norm(r)))
    if hist[-1] <= tol * max(1.0, float(np.linalg.norm(y))):
        return y, hist
    raise ConvergenceError(f"Newton diverged at x = {x}: last residual {hist[-1]:.3e}")


def _continue_to(spec, x_prev, y_prev, x_new, depth=0):
    try:
        return _newton(spec, x_new, y_prev)
    except ConvergenceError:
        if depth >= 8:
            raise
        x_mid = 0.5 * (x_prev + x_new)
        y_mid, _ = _continue_to(spec, x_prev, y_prev, x_mid, depth + 1)
        return _continue_to(spec, x_mid, y_mid, x_new, depth + 1)


def solve_leading_order(spec: ProblemSpec, degree: int = 64, tol: float = NEWTON_TOL):
    """Solve ``F_0(x, f_0(x)) = 0`` at every Chebyshev node of the window.

    Continuation runs outward from ``x0`` in both directions, seeding each
    Newton solve with the previous node.  Returns the vector interpolant and
    the per-node Newton residual histories.
    """
    a, b = spec.window
    nodes = ChebInterpolant.nodes_for(a, b, degree)
    s = ((nodes - a) / (b - a)).real
    s0 = ((spec.x0 - a) / (b - a)).real
    values = np.zeros((degree + 1, spec.N), dtype=complex)
    reports = {}
    y_start, hist = _newton(spec, spec.x0, spec.y0, tol)
    if np.linalg.norm(y_start - spec.y0) > 1e-6 * max(1.0, np.linalg.norm(spec.y0)):
        raise ValidationError("base point y0 is not a root of F0")
    y_start = spec.y0.copy()
    for side in (np.where(s >= s0)[0], np.where(s < s0)[0]):
        order = side[np.argsort(np.abs(s[side] - s0))]
        x_prev, y_prev = spec.x0, y_start
        for idx in order:
            y, hist = _continue_to(spec, x_prev, y_prev, nodes[idx])
            values[idx] = y
            reports[int(idx)] = NewtonReport(nodes[idx], hist)
            x_prev, y_prev = nodes[idx], y
    return ChebInterpolant(a, b, values), [reports[i] for i in sorted(reports)]


def jacobian_J0(spec: ProblemSpec, f0: ChebInterpolant) -> ChebInterpolant:
    """``J_0(x) = ∂F_0/∂y (x, f_0(x))`` sampled at the nodes of ``f0``."""
    vals = np.array([eval_F0_jacobian(spec, x, y) for x, y in zip(f0.nodes, f0.values)])
    return ChebInterpolant(f0.a, f0.b, vals)


# ---------------------------------------------------------------------------
# jet machinery
# ---------------------------------------------------------------------------

def coefficient_jets(spec: ProblemSpec, nodes, L: int):
    return {key: fn.jet(nodes, L) for key, fn in spec.coeffs.items()}


def _ones(shape, L):
    return Jet.constant(1.0, shape, L)


def _mono(Y, m, shape, L):
    out = None
    for yj, mj in zip(Y, m):
        if mj:
            p = yj ** mj
            out = p if out is None else out * p
    return _ones(shape, L) if out is None else out


def _F0_jet(spec, cj, Y, shape, L):
    out = [Jet.constant(0.0, shape, L) for _ in range(spec.N)]
    for (i, k, m), c in cj.items():
        if k == 0:
            out[i] = out[i] + c * _mono(Y, m, shape, L)
    return out


def _J0_jet(spec, cj, Y, shape, L) -> np.ndarray:
    J = np.zeros(shape + (spec.N, spec.N, L), dtype=complex)
    for (i, k, m), c in cj.items():
        if k:
            continue
        for j in range(spec.N):
            if m[j]:
                mm = list(m)
                mm[j] -= 1
                J[..., i, j, :] += (c * _mono(Y, mm, shape, L) * m[j]).c
    return J


def leading_order_jets(spec, cj, f0_values: np.ndarray, L: int) -> np.ndarray:
    """Taylor jets of ``f_0`` from node values via the implicit function theorem."""
    P = f0_values.shape[0]
    y = np.zeros((P, spec.N, L), dtype=complex)
    y[..., 0] = f0_values
    J0 = _J0_jet(spec, cj, [Jet(y[:, j]) for j in range(spec.N)], (P,), L)[..., 0]
    for p in range(1, L):
        F = _F0_jet(spec, cj, [Jet(y[:, j]) for j in range(spec.N)], (P,), L)
        r = np.stack([F[i].c[:, p] for i in range(spec.N)], axis=-1)
        y[:, :, p] = -np.linalg.solve(J0, r[..., None])[..., 0]
    return y


def _series_term_sum(spec, cj, f_jets: List[np.ndarray], n: int, shape, L):
    """``sum_{k<=n} sum_m F_{k m} [ŷ^m]_{n-k}`` with ŷ = f_0 + .. + f_n ħ^n."""
    caches = [PowerCache([Jet(f[:, j]) for f in f_jets[: n + 1]], operator.mul, _ones(shape, L))
              for j in range(spec.N)]
    out = [Jet.constant(0.0, shape, L) for _ in range(spec.N)]
    for (i, k, m), c in cj.items():
        if k > n:
            continue
        term = power_product_sum(caches, m, n - k, operator.mul)
        if isinstance(term, Jet):
            out[i] = out[i] + c * term
        elif term != 0:
            out[i] = out[i] + c * term
    return np.stack([o.c for o in out], axis=-2)


@dataclass
class FormalSolution:
    """Coefficients ``f_0..f_nmax`` on the window.

    ``jets[n]`` has shape (nodes, N, L) and holds the Taylor coefficients of
    ``f_n`` at each node; ``coeffs[n]`` interpolates the node values.
    """

    coeffs: List[ChebInterpolant]
    jets: np.ndarray
    spec: ProblemSpec
    newton: List[NewtonReport] = field(default_factory=list)
    max_condition: float = 1.0

    @property
    def nmax(self) -> int:
        return len(self.coeffs) - 1

    @property
    def window(self):
        return self.coeffs[0].a, self.coeffs[0].b

    @property
    def nodes(self) -> np.ndarray:
        return self.coeffs[0].nodes

    def derivative_values(self, n: int) -> np.ndarray:
        """``∂_x f_n`` at the nodes, shape (nodes, N)."""
        return self.jets[n][..., 1]

    def derivative(self, n: int) -> ChebInterpolant:
        a, b = self.window
        return ChebInterpolant(a, b, self.derivative_values(n))

    def sup_norms(self) -> np.ndarray:
        return np.array([c.sup_norm() for c in self.coeffs])

    def norms_at(self, x) -> np.ndarray:
        return np.array([np.max(np.abs(c(x))) for c in self.coeffs])

    def partial_sum(self, x, hbar, order: int | None = None) -> np.ndarray:
        order = self.nmax if order is None else order
        return sum(self.coeffs[n](x) * hbar ** n for n in range(order + 1))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "node_re", "node_im", "comp", "val_re", "val_im"])
            for n, c in enumerate(self.coeffs):
                for x, v in zip(c.nodes, c.values):
                    for comp, val in enumerate(v):
                        w.writerow([n, repr(float(x.real)), repr(float(x.imag)), comp + 1,
                                    repr(float(val.real)), repr(float(val.imag))])

    def sup_norm_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "sup_norm"])
            for n, s in enumerate(self.sup_norms()):
                w.writerow([n, repr(float(s))])


def formal_solution(spec: ProblemSpec, nmax: int = 12, degree: int = 64,
                    jet_order: int | None = None) -> FormalSolution:
    """Compute ``f_0..f_nmax`` at the Chebyshev nodes of the problem window."""
    if nmax < 0:
        raise ValueError("nmax must be >= 0")
    L = jet_order if jet_order is not None else nmax + 4
    if L < nmax + 2:
        raise ValueError("jet order must be at least nmax + 2")
    f0, newton = solve_leading_order(spec, degree)
    nodes = f0.nodes
    P = len(nodes)
    with np.errstate(all="raise"):
        try:
            cj = coefficient_jets(spec, nodes, L)
        except (FloatingPointError, ZeroDivisionError) as exc:
            raise ValidationError(f"coefficient function has a pole on the window: {exc}") from exc
    jets = [leading_order_jets(spec, cj, f0.values, L)]
    J0 = _J0_jet(spec, cj, [Jet(jets[0][:, j]) for j in range(spec.N)], (P,), L)
    svals = np.linalg.svd(J0[..., 0], compute_uv=False)
    worst = int(np.argmin(svals[:, -1]))
    if svals[worst, -1] < TURNING_TOL * max(1.0, float(np.max(svals))):
        raise TurningPointError(f"leading-order Jacobian nearly singular at x = {nodes[worst]:.6g} "
                                f"(min singular value {svals[worst, -1]:.2e}); turning point "
                                "on the window")
    cond = float(np.max(np.linalg.cond(J0[..., 0])))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ConvergenceError(f"leading-order Jacobian ill-conditioned on window (cond {cond:.3e})")
    for n in range(1, nmax + 1):
        trial = jets + [np.zeros_like(jets[0])]
        R = _series_term_sum(spec, cj, trial, n, (P,), L)
        dprev = Jet(jets[n - 1]).deriv().c
        jets.append(jet_solve(J0, dprev - R))
    a, b = spec.window
    coeffs = [ChebInterpolant(a, b, j[..., 0]) for j in jets]
    return FormalSolution(coeffs, np.array(jets), spec, newton, cond)


def substitution_residual(sol: FormalSolution) -> np.ndarray:
    """Coefficients of ``ħ∂_x f̂ - F(x, ħ, f̂)`` for ħ^0..ħ^nmax at the nodes.

    Uses plain node values and truncated series products, independent of
    the jet recursion.  Shape (nmax+1, nodes, N).
    """
    spec = sol.spec
    nodes = sol.nodes
    vals = [c.values for c in sol.coeffs]
    caches = [PowerCache([v[:, j] for v in vals], operator.mul, np.ones(len(nodes)))
              for j in range(spec.N)]
    coef = {key: fn(nodes) for key, fn in spec.coeffs.items()}
    out = np.zeros((sol.nmax + 1, len(nodes), spec.N), dtype=complex)
    for q in range(sol.nmax + 1):
        if q:
            out[q] += sol.derivative_values(q - 1)
        for (i, k, m), c in coef.items():
            if k <= q:
                out[q, :, i] -= c * power_product_sum(caches, m, q - k)
    return out
