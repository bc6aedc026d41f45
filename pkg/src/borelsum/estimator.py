"""Estimator front end: ``fit`` builds the Borel field, ``predict`` resums.

>>> est = BorelLaplaceSolver(nmax=10).fit("problems/riccati.ini")   # doctest: +SKIP
>>> est.predict([[1.5, 0.1]])                                        # doctest: +SKIP
"""

from __future__ import annotations

import math
import warnings
from typing import List, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import borel as bl
from .exceptions import ValidationError
from .formal import formal_solution, jacobian_J0
from .gevrey import certify_bound, gevrey_fit, ift_radius, majorant_sequence
from .problem import validate_problem
from .resum import DISC_MARGIN, ResummedValue, required_xi_max, resum_solution, tail_bound
from .validation import check_points, check_positive, check_problem

PILOT_STEPS = 128
DEFAULT_STEPS = 512


class BorelLaplaceSolver(BaseEstimator):
    """Borel-Laplace resummation of the formal solution of ``ħ ∂_x f = F(x, ħ, f)``.

    Parameters
    ----------
    nmax : int
        Order of the formal solution (at least 2).
    degree : int
        Chebyshev degree on the problem window.
    grid_h : float or None
        Borel grid spacing; default ``xi_max / 512``.
    xi_max : float or None
        Laplace cutoff Ξ; default chosen so the tail bound is below
        ``tol/10`` at ``hbar_max``.
    tol : float
        Target accuracy for successive approximations and the tail.
    hbar_max : float
        Largest ``|ħ|`` that will be requested (sets Ξ).
    cross_check : bool
        Also sum the successive approximations (on the 2h grid) and require
        agreement with the Volterra march.
    """

    def __init__(self, nmax=12, degree=64, grid_h=None, xi_max=None, tol=1e-10,
                 hbar_max=0.1, cross_check=True):
        self.nmax = nmax
        self.degree = degree
        self.grid_h = grid_h
        self.xi_max = xi_max
        self.tol = tol
        self.hbar_max = hbar_max
        self.cross_check = cross_check

    def _check_params(self):
        check_positive("nmax", self.nmax, integer=True)
        if self.nmax < 2:
            raise ValidationError("nmax must be at least 2")
        check_positive("degree", self.degree, integer=True)
        check_positive("grid_h", self.grid_h, allow_none=True)
        check_positive("xi_max", self.xi_max, allow_none=True)
        check_positive("tol", self.tol)
        check_positive("hbar_max", self.hbar_max)

    # ------------------------------------------------------------------
    def fit(self, problem, y=None):
        """Run validation, formal solution, Borel engine and growth fit."""
        self._check_params()
        spec = check_problem(problem)
        report = validate_problem(spec)
        if not report.passed:
            raise ValidationError(report.summary())
        self.spec_ = spec
        self.validation_ = report
        self.formal_ = formal_solution(spec, nmax=self.nmax, degree=self.degree)
        self.gevrey_ = gevrey_fit(self.formal_.norms_at(spec.x0))
        J0 = jacobian_J0(spec, self.formal_.coeffs[0])
        self.spectral_ = bl.diagonalize_field(J0, spec.x0)
        self.standard_ = bl.standard_form(spec, self.formal_, self.spectral_)
        self.maps_ = [bl.liouville_map(self.spectral_.phi.component(i), spec.x0, spec.theta)
                      for i in range(spec.N)]
        extent = min(m.extent[1] for m in self.maps_) - max(m.extent[0] for m in self.maps_)
        self.xi_max_ = self._choose_xi_max(extent)
        h = self.grid_h if self.grid_h is not None else self.xi_max_ / DEFAULT_STEPS
        geo = bl.make_geometry(self.maps_, self.xi_max_, h)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            self.data_ = bl.borel_data(self.standard_, self.maps_, geo, spec.theta)
        if self.data_.flags:
            warnings.warn("; ".join(self.data_.flags), RuntimeWarning, stacklevel=2)
        self.field_ = bl.volterra_march(self.data_)
        coarse_data = self._quiet_data(geo.coarsen())
        self.coarse_field_ = bl.volterra_march(coarse_data)
        self.growth_ = bl.fit_growth(self.field_.S, geo)
        self.successive_ = None
        trunc = 0.0
        if self.cross_check:
            self.successive_ = bl.successive_approximations(coarse_data, tol=self.tol,
                                                             march=self.coarse_field_)
            trunc = self.successive_.march_difference
        self.trunc_ = trunc
        self.constants_ = bl.majorant_constants(self.data_)
        return self

    def _quiet_data(self, geo):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return bl.borel_data(self.standard_, self.maps_, geo, self.spec_.theta)

    def _choose_xi_max(self, extent: float) -> float:
        if self.xi_max is not None:
            return float(self.xi_max)
        # pilot run on a short, coarse grid to estimate (D, K)
        xi_p = min(2.0, 0.5 * extent)
        geo = bl.make_geometry(self.maps_, xi_p, xi_p / PILOT_STEPS)
        pilot = bl.volterra_march(self._quiet_data(geo))
        growth = bl.fit_growth(pilot.S, geo)
        need = required_xi_max(growth, [self.hbar_max], self.tol)
        xi = max(need, 4 * self.hbar_max)
        if xi > 0.75 * extent:
            raise ValidationError(f"window too short for the requested accuracy: need Ξ = {xi:.4g} "
                                  f"but the mapped window has extent {extent:.4g}; "
                                  "extend the window along the ray or raise tol")
        return xi

    # ------------------------------------------------------------------
    def realized_range(self):
        """``(x_lo, x_hi)`` reachable with full-length Laplace rows (component 1)."""
        check_is_fitted(self, "field_")
        g = self.field_.geometry
        rot = np.exp(1j * self.spec_.theta)
        ends = [self.maps_[0].inverse(rot * (g.zmin + j * g.h)) for j in (0, g.Jx)]
        return ends[0], ends[1]

    def resum(self, xs: Sequence, hbars: Sequence) -> List[List[ResummedValue]]:
        check_is_fitted(self, "field_")
        return resum_solution(self.formal_, self.field_, self.spectral_, self.maps_, xs, hbars,
                              self.growth_, coarse=self.coarse_field_, trunc=self.trunc_)

    def _points(self, X):
        X = check_points(X)
        out = []
        for x, hb in X:
            x = x.real if x.imag == 0 else x
            out.append(self.resum([x], [hb])[0][0])
        return out

    def predict(self, X) -> np.ndarray:
        """Resummed ``f`` at rows ``[x, ħ]``; shape (n_samples, N)."""
        check_is_fitted(self, "field_")
        return np.array([rv.value for rv in self._points(X)])

    def predict_error(self, X) -> np.ndarray:
        """Error budgets ``(quadrature, tail, truncation)``; shape (n_samples, 3)."""
        check_is_fitted(self, "field_")
        return np.array([[rv.quad, rv.tail, rv.trunc] for rv in self._points(X)])

    # ------------------------------------------------------------------
    def term_bound_check(self, nterms: int = 20):
        """Compare per-term constants of the successive approximations with
        the Borel majorant ``M_n`` and its certified bound ``D (1/t*)^n``.

        Returns ``(c_n, M_n, D (1/t*)^n)`` arrays for ``n <= nterms`` terms
        actually computed.
        """
        check_is_fitted(self, "field_")
        if self.successive_ is None:
            raise ValidationError("term bounds need cross_check=True")
        consts = self.constants_
        seq = majorant_sequence("borel", {"B": consts["B"], "C": consts["C"]}, nterms, self.spec_.N)
        cert = certify_bound(seq, ift_radius("borel", {"B": consts["B"], "C": consts["C"]}))
        c = self.successive_.term_constants[: nterms + 1]
        n = np.arange(len(c))
        geometric = cert.D * (1.0 / cert.tstar) ** n if math.isfinite(cert.tstar) \
            else np.full(len(c), cert.D)
        return c, seq.values[: len(c)], geometric

    def tail_bound(self, hbar) -> float:
        check_is_fitted(self, "field_")
        hr = np.exp(-1j * self.spec_.theta) * complex(hbar)
        return tail_bound(self.growth_, self.field_.geometry.xi_max, hr)
