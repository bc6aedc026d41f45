"""Laplace transform along the ray and assembly of the resummed solution.

For ``ħ = e^{iθ} ħ'`` the Borel field (already rotated) gives
``g^i(x, ħ) = ∫_0^∞ e^{-ξ/ħ'} σ^i(e^{-iθ} Φ_i(x), ξ) dξ`` and
``f = f_0 + ħ f_1 + ħ P_0^{-1} g``.

The integral over ``[0, Ξ]`` uses composite exponentially weighted
Newton-Cotes panels (weights exact for ``e^{-ξ/ħ'}`` times a degree-4
polynomial), so small ``|ħ|`` needs no grid refinement.  The remainder
``[Ξ, ∞)`` is bounded from the growth fit ``|σ| <= D e^{Kξ}``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence

import numpy as np

from .borel import BorelField, GrowthFit, LiouvilleMap, SpectralData
from .exceptions import OutsideDiscError, OutsideWindowError
from .formal import FormalSolution
from .series import RayGridFunction

DISC_MARGIN = 0.05
ROW_STENCIL = 10


@dataclass(frozen=True)
class BorelDisc:
    """``{ħ : Re(e^{iθ}/ħ) > 1/d0}``; ``d0 = inf`` is the open half plane."""

    theta: float
    d0: float

    @classmethod
    def from_growth(cls, theta: float, growth: GrowthFit, margin: float = DISC_MARGIN):
        return cls(theta, 1.0 / (growth.K + margin))

    def inverse_bound(self) -> float:
        return 0.0 if math.isinf(self.d0) else 1.0 / self.d0

    def contains(self, hbar) -> bool:
        hbar = complex(hbar)
        if hbar == 0:
            return False
        return (np.exp(1j * self.theta) / hbar).real > self.inverse_bound()

    def check(self, hbar) -> None:
        if not self.contains(hbar):
            c = (np.exp(1j * self.theta) / complex(hbar)).real if hbar != 0 else float("nan")
            raise OutsideDiscError(
                f"ħ = {complex(hbar)} is outside the Borel disc: Re(e^(iθ)/ħ) = {c:.6g} "
                f"must exceed {self.inverse_bound():.6g} (disc diameter {self.d0:.6g})")


@dataclass
class ResummedValue:
    value: np.ndarray
    quad: float
    tail: float
    trunc: float

    @property
    def error(self) -> float:
        return self.quad + self.tail + self.trunc


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _gauss(n: int = 32):
    return np.polynomial.legendre.leggauss(n)


def _panel_weights(s: complex, degree: int) -> np.ndarray:
    """``∫_0^degree e^{-s u} l_i(u) du`` for the Lagrange basis on ``0..degree``."""
    x, w = _gauss()
    u = 0.5 * degree * (x + 1)
    wu = 0.5 * degree * w * np.exp(-s * u)
    nodes = np.arange(degree + 1)
    out = np.empty(degree + 1, dtype=complex)
    for i in range(degree + 1):
        li = np.ones_like(u)
        for j in nodes:
            if j != i:
                li = li * (u - j) / (i - j)
        out[i] = np.sum(wu * li)
    return out


def laplace_weights(T: int, h: float, hbar, degree: int = 4) -> np.ndarray:
    """Weights ``w`` with ``sum_k w_k σ(kh) ≈ ∫_0^{Th} e^{-ξ/ħ} σ(ξ) dξ``."""
    if T % degree:
        raise ValueError(f"number of steps {T} must be a multiple of {degree}")
    s = h / complex(hbar)
    base = _panel_weights(s, degree)
    w = np.zeros(T + 1, dtype=complex)
    for p in range(T // degree):
        decay = np.exp(-s * degree * p)
        if abs(decay) < 1e-300:
            break
        w[degree * p : degree * (p + 1) + 1] += h * decay * base
    return w


def tail_bound(growth: GrowthFit, xi_max: float, hbar) -> float:
    c = (1.0 / complex(hbar)).real
    if c <= growth.K:
        return math.inf
    if growth.D == 0:
        return 0.0
    return growth.D * math.exp((growth.K - c) * xi_max) / (c - growth.K)


def laplace_ray(sigma, hbar, growth: GrowthFit, h: Optional[float] = None,
                margin: float = DISC_MARGIN) -> ResummedValue:
    """``∫_0^∞ e^{-ξ/ħ} σ(ξ) dξ`` along the positive real ξ-axis.

    ``sigma`` is a :class:`RayGridFunction` (origin 0, direction 1) or a
    sample array with spacing ``h``.  Quadrature error is estimated as the
    gap between degree-4 and degree-2 panel rules.
    """
    if isinstance(sigma, RayGridFunction):
        h, vals = sigma.h, sigma.values
    else:
        vals = np.asarray(sigma, dtype=complex)
    c = (1.0 / complex(hbar)).real
    if c <= growth.K + margin:
        raise OutsideDiscError(f"ħ = {complex(hbar)} outside the Borel disc: Re(1/ħ) = {c:.6g} "
                               f"must exceed K + margin = {growth.K + margin:.6g}")
    T = len(vals) - 1
    if not np.any(vals):
        return ResummedValue(np.zeros(1, dtype=complex), 0.0, 0.0, 0.0)
    q4 = laplace_weights(T, h, hbar, 4) @ vals
    q2 = laplace_weights(T, h, hbar, 2) @ vals
    return ResummedValue(np.array([q4]), float(abs(q4 - q2)),
                         tail_bound(growth, T * h, hbar), 0.0)


def required_xi_max(growth: GrowthFit, hbars: Sequence[complex], tol: float) -> float:
    """Smallest Ξ with tail bound <= tol/10 for every requested ħ (rotated)."""
    need = 0.0
    for hb in hbars:
        c = (1.0 / complex(hb)).real
        if c <= growth.K + DISC_MARGIN:
            raise OutsideDiscError(f"ħ' = {complex(hb)} outside the Borel disc: Re(1/ħ') = {c:.6g} "
                                   f"must exceed {growth.K + DISC_MARGIN:.6g}")
        gap = c - growth.K
        if growth.D > 0:
            need = max(need, math.log(max(10 * growth.D / (tol * gap), 1.0)) / gap)
    return need


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _bary_weights(nodes: np.ndarray, x: float) -> np.ndarray:
    d = x - nodes
    hit = np.flatnonzero(d == 0)
    if hit.size:
        w = np.zeros(len(nodes))
        w[hit[0]] = 1.0
        return w
    lam = np.array([1.0 / np.prod([nodes[i] - nodes[j] for j in range(len(nodes)) if j != i])
                    for i in range(len(nodes))])
    t = lam / d
    return t / t.sum()


class _RowLaplace:
    """Laplace transforms of σ rows for a fixed ħ', memoised per row."""

    def __init__(self, fld: BorelField, hbar_r: complex):
        g = fld.geometry
        self.fld = fld
        self.w4 = laplace_weights(g.T, g.h, hbar_r, 4)
        self.w2 = laplace_weights(g.T, g.h, hbar_r, 2)
        self.cache = {}

    def __call__(self, i: int, j: int):
        key = (i, j)
        if key not in self.cache:
            row = self.fld.S[i, j]
            q4 = self.w4 @ row
            self.cache[key] = (q4, abs(q4 - self.w2 @ row))
        return self.cache[key]


def _interp_row_values(rl: _RowLaplace, i: int, p: float, Jx: int):
    """Interpolate row Laplace values at fractional row ``p``.

    Returns (value, quadrature error, interpolation error estimate).
    """
    n = min(ROW_STENCIL, Jx + 1)
    j0 = int(round(p)) - n // 2
    j0 = min(max(j0, 0), Jx + 1 - n)
    rows = np.arange(j0, j0 + n)
    vals = np.array([rl(i, j)[0] for j in rows])
    qerr = max(rl(i, j)[1] for j in rows)
    w = _bary_weights(rows.astype(float), p)
    v = w @ vals
    if np.any(w == 1.0) or n < 4:
        return v, qerr, 0.0
    sub = rows[1:-1]
    w2 = _bary_weights(sub.astype(float), p)
    interp = abs(v - w2 @ vals[1:-1])
    return v, qerr, float(interp)


def row_position(fld: BorelField, lmap: LiouvilleMap, x, imag_tol: float = 1e-8) -> float:
    """Fractional grid row of ``z = e^{-iθ} Φ(x)``; raises outside the realized window."""
    g = fld.geometry
    z = np.exp(-1j * fld.theta) * complex(lmap(x))
    if abs(z.imag) > imag_tol * max(1.0, abs(z)):
        raise OutsideWindowError(f"x = {x} maps off the Laplace ray (Im z = {z.imag:.3e})")
    p = (z.real - g.zmin) / g.h
    if p < -1e-9 or p > g.Jx + 1e-9:
        lo, hi = g.zmin, g.zmin + g.Jx * g.h
        raise OutsideWindowError(f"x = {x} maps to z = {z.real:.6g}, outside the realized range "
                                 f"[{lo:.6g}, {hi:.6g}] of full-length Laplace rows")
    return min(max(p, 0.0), float(g.Jx))


def resum_solution(sol: FormalSolution, fld: BorelField, spectral: SpectralData,
                   maps: Sequence[LiouvilleMap], xs: Sequence, hbars: Sequence,
                   growth: GrowthFit, coarse: Optional[BorelField] = None,
                   trunc: float = 0.0, margin: float = DISC_MARGIN) -> List[List[ResummedValue]]:
    """Resummed ``f(x, ħ)`` for every x (outer list) and ħ (inner list).

    ``coarse`` is the same problem on the 2h grid; when given, the gap
    between the two Laplace values is added to the quadrature error.
    ``trunc`` bounds the sup error of σ (e.g. scheme disagreement); it is
    propagated as ``trunc / (Re(1/ħ') - K)``.
    """
    g = fld.geometry
    theta = fld.theta
    rot = np.exp(-1j * theta)
    disc = BorelDisc(theta, 1.0 / (growth.K + margin))
    for hb in hbars:
        disc.check(hb)
    out: List[List[ResummedValue]] = []
    row_l = {hb: _RowLaplace(fld, rot * complex(hb)) for hb in hbars}
    row_c = {hb: _RowLaplace(coarse, rot * complex(hb)) for hb in hbars} if coarse is not None else {}
    for x in xs:
        ps = [row_position(fld, maps[i], x) for i in range(fld.N)]
        f0, f1 = sol.coeffs[0](x), sol.coeffs[1](x)
        V = spectral.Pinv(x)
        Vnorm = float(np.max(np.sum(np.abs(V), axis=1)))
        res_x = []
        for hb in hbars:
            hb = complex(hb)
            hr = rot * hb
            gvec = np.zeros(fld.N, dtype=complex)
            quad = 0.0
            for i in range(fld.N):
                v, qe, ie = _interp_row_values(row_l[hb], i, ps[i], g.Jx)
                gvec[i] = v
                quad = max(quad, qe + ie)
                if coarse is not None:
                    pc = ps[i] / 2.0
                    vc, _, _ = _interp_row_values(row_c[hb], i, pc, coarse.geometry.Jx)
                    quad = max(quad, qe + ie + abs(v - vc))
            c = (1.0 / hr).real
            tail = tail_bound(growth, g.xi_max, hr)
            tr = trunc / (c - growth.K) if trunc else 0.0
            f = f0 + hb * f1 + hb * (V @ gvec)
            s = abs(hb) * Vnorm
            res_x.append(ResummedValue(f, s * quad, s * tail, s * tr))
        out.append(res_x)
    return out


def _num(v) -> str:
    return repr(float(v))


def resum_csv(path, xs, hbars, values: List[List[ResummedValue]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_re", "x_im", "hbar_re", "hbar_im", "comp", "f_re", "f_im",
                    "err_quad", "err_tail", "err_trunc"])
        for x, row in zip(xs, values):
            x = complex(x)
            for hb, rv in zip(hbars, row):
                hb = complex(hb)
                for comp, v in enumerate(rv.value):
                    w.writerow([_num(x.real), _num(x.imag), _num(hb.real), _num(hb.imag), comp + 1,
                                _num(v.real), _num(v.imag), _num(rv.quad), _num(rv.tail),
                                _num(rv.trunc)])
