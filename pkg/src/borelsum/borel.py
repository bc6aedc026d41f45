"""Borel-plane engine.

Pipeline: diagonalise the leading Jacobian (``diagonalize_field``), rewrite
the system in standard form ``ħ K_0^{-1} ∂_x g - g = ħ G(x, ħ, g)`` with
``f = f_0 + ħ f_1 + ħ P_0^{-1} g`` (``standard_form``), straighten each
eigenvalue with a Liouville coordinate ``z = Φ_i(x)`` (``liouville_map``),
and solve the Borel-transformed equation for ``σ(z, ξ)``.

Conventions (fixed by matching the Borel transform of the standard form,
and checked against the closed-form linear problem):

* ``σ(z, 0) = -a_0(z)``;
* ``σ(z, ξ) = -a_0(z + ξ) + I[RHS](z, ξ)`` with
  ``I[α](z, ξ) = -∫_0^ξ α(z + t, ξ - t) dt`` and
  ``RHS = α_0 + sum_{|m|>=1} (a_m σ^{*m} + α_m * σ^{*m})``;
* ``A_m(z, ħ) = a_m(z) + L[α_m](ħ)``, i.e.
  ``α_m(z, ξ) = sum_{k>=1} A_{m,k}(z) ξ^{k-1}/(k-1)!``.

The grid is ``z_j = z_min + j h``, ``ξ_k = k h`` restricted to
``j + k <= Jmax`` (so every characteristic ``z + ξ = const`` stays inside
the mapped window).  The direction θ is handled by rotating ħ and z so the
Laplace ray is the positive real axis.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .chebyshev import ChebInterpolant
from .exceptions import (ConvergenceError, EigenvalueCollision, OracleDisagreement,
                         TurningPointError, ValidationError)
from .formal import FormalSolution
from .series import MultiIndex, Poly, rho, truncated_compose, \
    unit_index

GAP_TOL = 1e-6
CANCEL_TOL = 1e-8
# σ_n is compared with its ξ^n bound only from ξ = RESOLVED_STEPS * n * h on;
# closer to 0 the trapezoid grid does not resolve the n-fold vanishing
RESOLVED_STEPS = 4


# ---------------------------------------------------------------------------
# spectral data
# ---------------------------------------------------------------------------

@dataclass
class SpectralData:
    """Eigenvalue branches ``φ_i`` and eigenvector frames along the window.

    ``Pinv`` holds right eigenvectors as columns (``P_0^{-1}``), ``P`` its
    inverse, so ``P J_0 Pinv = diag(φ)``.
    """

    phi: ChebInterpolant          # (nodes, N)
    P: ChebInterpolant            # (nodes, N, N)
    Pinv: ChebInterpolant         # (nodes, N, N)
    dPinv: ChebInterpolant        # (nodes, N, N)
    min_gap: float
    max_jump: float

    @property
    def N(self) -> int:
        return self.phi.values.shape[1]


def diagonalize_field(J0: ChebInterpolant, x0=None) -> SpectralData:
    """Eigendecomposition of ``J_0`` at every node with continuous branches.

    Branches are matched node to node (starting at the node nearest
    ``x0``) by minimum total eigenvalue displacement.  Eigenvectors are
    scaled so that the entry that is largest at the start node equals 1
    everywhere.
    """
    vals = J0.values
    P_nodes, N, _ = vals.shape
    nodes = J0.nodes
    start = 0 if x0 is None else int(np.argmin(np.abs(nodes - x0)))
    # walk outward from the start node in both directions
    left = list(range(start, -1, -1))
    right = list(range(start, P_nodes))
    lam = np.zeros((P_nodes, N), dtype=complex)
    vec = np.zeros((P_nodes, N, N), dtype=complex)
    w, v = np.linalg.eig(vals[start])
    idx = np.lexsort((w.imag, w.real))
    lam[start], vec[start] = w[idx], v[:, idx]
    pivot = np.argmax(np.abs(vec[start]), axis=0)
    max_jump = 0.0
    for path in (right, left):
        prev = start
        for node in path[1:]:
            w, v = np.linalg.eig(vals[node])
            cost = np.abs(lam[prev][:, None] - w[None, :])
            _, col = linear_sum_assignment(cost)
            lam[node], vec[node] = w[col], v[:, col]
            max_jump = max(max_jump, float(np.max(np.abs(lam[node] - lam[prev]))))
            prev = node
    for i in range(N):
        piv = vec[:, pivot[i], i]
        if np.min(np.abs(piv)) < 1e-12:
            raise EigenvalueCollision("eigenvector normalisation entry vanishes on the window")
        vec[:, :, i] /= piv[:, None]
    if N > 1:
        gaps = np.where(np.eye(N, dtype=bool)[None], np.inf,
                        np.abs(lam[:, :, None] - lam[:, None, :]))
        min_gap = float(np.min(gaps))
        if min_gap < GAP_TOL:
            raise EigenvalueCollision(f"eigenvalue collision on window (min gap {min_gap:.2e}); "
                                      "distinct-eigenvalue hypothesis violated")
    else:
        min_gap = math.inf
    if np.min(np.abs(lam)) < 1e-12:
        raise TurningPointError("an eigenvalue of J0 vanishes on the window (turning point)")
    Pm = np.linalg.inv(vec)
    check = Pm @ vals @ vec - np.einsum("ni,ij->nij", lam, np.eye(N))
    scale = max(1.0, float(np.max(np.abs(vals))))
    if np.max(np.abs(check)) > 1e-8 * scale:
        raise ConvergenceError("eigendecomposition failed the P J0 P^-1 = K0 check")
    a, b = J0.a, J0.b
    Pinv = ChebInterpolant(a, b, vec)
    return SpectralData(ChebInterpolant(a, b, lam), ChebInterpolant(a, b, Pm), Pinv,
                        Pinv.derivative(), min_gap, max_jump)


# ---------------------------------------------------------------------------
# standard form
# ---------------------------------------------------------------------------

GKey = Tuple[int, int, MultiIndex]   # (component i, ħ-power k, w-multi-index m)


@dataclass
class StandardFormCoeffs:
    """Coefficients ``G^i_{k m}(x)`` of the standard-form right-hand side.

    ``table[(i, k, m)]`` holds node values on the formal-solution window.
    """

    table: Dict[GKey, ChebInterpolant]
    N: int
    cancellation: float
    coupled: bool

    @property
    def hbar_degree(self) -> int:
        return max((k for (_, k, _) in self.table), default=0)

    @property
    def w_degree(self) -> int:
        return max((sum(m) for (_, _, m) in self.table), default=0)

    def multi_indices(self, i: int | None = None) -> List[MultiIndex]:
        return sorted({m for (ii, _, m) in self.table if i is None or ii == i},
                      key=lambda m: (sum(m), m[::-1]))

    def evaluate(self, x, hbar, w) -> np.ndarray:
        out = np.zeros(self.N, dtype=complex)
        for (i, k, m), c in self.table.items():
            mono = np.prod([wj ** mj for wj, mj in zip(w, m)])
            out[i] += c(x) * hbar ** k * mono
        return out


def standard_form(spec, sol: FormalSolution, spectral: SpectralData,
                  tol: float = CANCEL_TOL) -> StandardFormCoeffs:
    """Compute ``G = ħ^{-2} K_0^{-1} P_0 R`` with

    ``R = F(x, ħ, f_0 + ħ f_1 + ħ P_0^{-1} w) - ħ ∂f_0 - ħ P_0^{-1} K_0 w
    - ħ^2 ∂f_1 - ħ^2 (∂P_0^{-1}) w``

    by exact polynomial composition at the nodes.  The ħ^0 and ħ^1 parts of
    ``R`` must cancel; a residual above ``tol`` raises.
    """
    if sol.nmax < 1:
        raise ValueError("standard form needs the formal solution through order 1")
    N = spec.N
    nodes = sol.nodes
    f0, f1 = sol.coeffs[0].values, sol.coeffs[1].values
    df0, df1 = sol.derivative_values(0), sol.derivative_values(1)
    V, dV, lam = spectral.Pinv.values, spectral.dPinv.values, spectral.phi.values
    Pm = spectral.P.values
    inner = []
    for j in range(N):
        terms = {(0, (0,) * N): f0[:, j], (1, (0,) * N): f1[:, j]}
        for l in range(N):
            terms[(1, unit_index(N, l))] = V[:, j, l]
        inner.append(Poly(N, terms))
    R: List[Poly] = []
    for i in range(N):
        outer = {(k, m): fn(nodes) for (ii, k, m), fn in spec.coeffs.items() if ii == i}
        comp = truncated_compose(outer, inner) if outer else Poly(N, {})
        sub = {(1, (0,) * N): df0[:, i], (2, (0,) * N): df1[:, i]}
        for l in range(N):
            sub[(1, unit_index(N, l))] = V[:, i, l] * lam[:, l]
            sub[(2, unit_index(N, l))] = dV[:, i, l]
        R.append(comp - Poly(N, sub))
    scale = 1.0 + max(float(np.max(np.abs(c))) for p in R for c in p.terms.values()) \
        if any(p.terms for p in R) else 1.0
    worst = 0.0
    for p in R:
        for (k, m), c in p.terms.items():
            if k <= 1:
                worst = max(worst, float(np.max(np.abs(c))))
    if worst > tol * scale:
        raise OracleDisagreement(f"standard-form cancellation failed: ħ^0/ħ^1 residual {worst:.3e} "
                                 "(inconsistent f0/f1)")
    table: Dict[GKey, ChebInterpolant] = {}
    a, b = sol.window
    for i in range(N):
        for k in range(2, max((kk for p in R for (kk, _) in p.terms), default=1) + 1):
            ms = {m for p in R for (kk, m) in p.terms if kk == k}
            for m in ms:
                val = sum(Pm[:, i, j] * R[j].coefficient(k, m, 0) for j in range(N)) / lam[:, i]
                val = np.broadcast_to(np.asarray(val, dtype=complex), (len(nodes),))
                if np.max(np.abs(val)) > 1e-14 * scale:
                    table[(i, k - 2, m)] = ChebInterpolant(a, b, val)
    coupled = False
    if N > 1:
        phi = spectral.phi.values
        distinct = np.max(np.abs(phi - phi[:, :1])) > 1e-12
        for (i, k, m) in table:
            if any(mj for j, mj in enumerate(m) if j != i) and distinct:
                coupled = True
    return StandardFormCoeffs(table, N, worst, coupled)


# ---------------------------------------------------------------------------
# Liouville maps
# ---------------------------------------------------------------------------

@dataclass
class LiouvilleMap:
    """``Φ(x) = ∫_{x0}^x φ(t) dt`` with a Newton inverse."""

    phi: ChebInterpolant
    Phi: ChebInterpolant
    x0: complex
    theta: float = 0.0

    def __call__(self, x):
        return self.Phi(x)

    def inverse(self, z, tol: float = 1e-14, maxiter: int = 50):
        z = np.asarray(z, dtype=complex)
        flat = np.atleast_1d(z).ravel()
        nodes = self.Phi.nodes
        vals = self.Phi.values
        x = nodes[np.argmin(np.abs(vals[None, :] - flat[:, None]), axis=1)]
        for _ in range(maxiter):
            step = (self.Phi(x) - flat) / self.phi(x)
            x = x - step
            if np.max(np.abs(step)) <= tol * max(1.0, float(np.max(np.abs(x)))):
                break
        else:
            raise ConvergenceError("Liouville inverse: Newton did not converge")
        return x.reshape(z.shape) if z.ndim else x[0]

    @property
    def rotated_image(self) -> np.ndarray:
        """``e^{-iθ} Φ`` at the window nodes."""
        return np.exp(-1j * self.theta) * self.Phi.values

    @property
    def extent(self) -> Tuple[float, float]:
        r = self.rotated_image.real
        return float(r.min()), float(r.max())

    @property
    def thickness(self) -> float:
        """Largest deviation of the rotated image from the real axis."""
        return float(np.max(np.abs(self.rotated_image.imag)))


def liouville_map(phi: ChebInterpolant, x0, theta: float = 0.0) -> LiouvilleMap:
    """Build ``Φ`` by integrating the interpolant of ``φ`` (Clenshaw-Curtis)."""
    if np.min(np.abs(phi.values)) < 1e-12:
        raise TurningPointError("eigenvalue branch vanishes on the window (turning point)")
    Phi = phi.antiderivative(x0)
    Phi = ChebInterpolant(phi.a, phi.b, Phi(phi.nodes))
    lm = LiouvilleMap(phi, Phi, complex(x0), theta)
    s = ((phi.nodes - phi.a) / (phi.b - phi.a)).real
    r = lm.rotated_image.real[np.argsort(s)]
    d = np.diff(r)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValidationError("Liouville image of the window is not monotone along the ray "
                              "(non-injective map)")
    return lm


# ---------------------------------------------------------------------------
# grid data
# ---------------------------------------------------------------------------

@dataclass
class GridGeometry:
    h: float
    T: int          # ξ steps, ξ_max = T h
    Jmax: int       # z rows 0..Jmax
    zmin: float

    @property
    def Jx(self) -> int:
        """Rows with a full ξ-range (usable for Laplace integrals)."""
        return self.Jmax - self.T

    @property
    def xi_max(self) -> float:
        return self.T * self.h

    @property
    def z(self) -> np.ndarray:
        return self.zmin + self.h * np.arange(self.Jmax + 1)

    @property
    def xi(self) -> np.ndarray:
        return self.h * np.arange(self.T + 1)

    def valid_mask(self) -> np.ndarray:
        j = np.arange(self.Jmax + 1)[:, None]
        k = np.arange(self.T + 1)[None, :]
        return j + k <= self.Jmax

    def coarsen(self) -> "GridGeometry":
        if self.T % 2 or self.Jmax % 2:
            raise ValueError("coarsening needs even T and Jmax")
        return GridGeometry(2 * self.h, self.T // 2, self.Jmax // 2, self.zmin)


def make_geometry(maps: Sequence[LiouvilleMap], xi_max: float, h: float,
                  z_range: Optional[Tuple[float, float]] = None) -> GridGeometry:
    """Grid covering the common rotated image of all Liouville maps."""
    lo = max(m.extent[0] for m in maps)
    hi = min(m.extent[1] for m in maps)
    if z_range is not None:
        lo, hi = max(lo, z_range[0]), min(hi, z_range[1])
    # T divisible by 8 and Jmax even so the grid coarsens into degree-4 panels
    T = 8 * int(math.ceil(xi_max / (8 * h) - 1e-9))
    Jmax = 2 * int(math.floor((hi - lo) / (2 * h) + 1e-9))
    if Jmax < T:
        raise ValidationError(f"window too short: mapped extent {hi - lo:.4g} < xi_max {T * h:.4g}; "
                              "extend the window along the ray")
    return GridGeometry(h, T, Jmax, lo)


@dataclass
class BorelData:
    """Borel-plane coefficient data on a grid.

    ``a[i][m]`` has shape (Jmax+1,) and ``alpha[i][m]`` shape (Jmax+1, T+1);
    index 0 of the multi-index list is the zero index.
    """

    geometry: GridGeometry
    N: int
    a: List[Dict[MultiIndex, np.ndarray]]
    alpha: List[Dict[MultiIndex, np.ndarray]]
    A: List[Dict[MultiIndex, np.ndarray]]    # A[i][m] shape (kmax+1, Jmax+1)
    x_rows: np.ndarray                       # (N, Jmax+1) preimages Φ_i^{-1}(z_j)
    theta: float
    flags: List[str] = field(default_factory=list)

    @property
    def zero(self) -> MultiIndex:
        return (0,) * self.N

    def multi_indices(self) -> List[MultiIndex]:
        ms = set()
        for i in range(self.N):
            ms.update(m for m in self.a[i] if sum(m) > 0)
            ms.update(m for m in self.alpha[i] if sum(m) > 0)
        return sorted(ms, key=lambda m: (sum(m), m[::-1]))

    def a0(self) -> np.ndarray:
        J = self.geometry.Jmax + 1
        return np.array([self.a[i].get(self.zero, np.zeros(J, dtype=complex))
                         for i in range(self.N)])

    def alpha0(self) -> Optional[np.ndarray]:
        if not any(self.zero in self.alpha[i] for i in range(self.N)):
            return None
        shape = (self.geometry.Jmax + 1, self.geometry.T + 1)
        return np.array([self.alpha[i].get(self.zero, np.zeros(shape, dtype=complex))
                         for i in range(self.N)])


def borel_data(std: StandardFormCoeffs, maps: Sequence[LiouvilleMap],
               geometry: GridGeometry, theta: float = 0.0) -> BorelData:
    """Sample ``a_m`` and ``α_m`` on the grid.

    ``A^i_{m,k}(z) = e^{iθ(k+1)} G^i_{k m}(Φ_i^{-1}(e^{iθ} z))`` for real
    grid ``z`` (ħ and z rotated so the Laplace ray is real).
    """
    N = std.N
    z = geometry.z
    xi = geometry.xi
    rot = np.exp(1j * theta)
    x_rows = np.array([maps[i].inverse(rot * z) for i in range(N)])
    for i in range(N):
        if not np.all([maps[i].phi.contains(x, tol=1e-6) for x in x_rows[i]]):
            raise ValidationError("grid rows map outside the window (thickness exceeded)")
    kmax = std.hbar_degree
    a: List[Dict] = [dict() for _ in range(N)]
    alpha: List[Dict] = [dict() for _ in range(N)]
    A: List[Dict] = [dict() for _ in range(N)]
    for (i, k, m), c in std.table.items():
        arr = A[i].setdefault(m, np.zeros((kmax + 1, len(z)), dtype=complex))
        arr[k] = rot ** (k + 1) * c(x_rows[i])
    fact = [math.factorial(k - 1) for k in range(1, kmax + 1)]
    for i in range(N):
        for m, arr in A[i].items():
            if np.any(arr[0] != 0):
                a[i][m] = arr[0]
            if kmax >= 1 and np.any(arr[1:] != 0):
                al = np.zeros((len(z), len(xi)), dtype=complex)
                for k in range(1, kmax + 1):
                    if np.any(arr[k] != 0):
                        al += arr[k][:, None] * (xi[None, :] ** (k - 1) / fact[k - 1])
                alpha[i][m] = al
    flags = ["coupled_components"] if std.coupled else []
    if std.coupled:
        warnings.warn("components with distinct eigenvalues are coupled; the per-component "
                      "Liouville coordinates are exact only for decoupled systems",
                      RuntimeWarning, stacklevel=2)
    return BorelData(geometry, N, a, alpha, A, x_rows, theta, flags)


def majorant_constants(data: BorelData) -> Dict[str, float]:
    """Constants ``(B, C, L)`` with ``|a_m|, |α_m| e^{-Lξ} <= rho_m C B^m``.

    ``β_m = max(sup|a_m|, sup_z sum_k |A_{m,k}|)``, ``C = β_0``,
    ``B = max_m (β_m / (rho_m C))^{1/|m|}`` and ``L = 1`` when some ``α_m``
    has positive ξ-degree.
    """
    N = data.N
    beta: Dict[MultiIndex, float] = {}
    L = 0.0
    for i in range(N):
        for m, arr in data.A[i].items():
            b_a = float(np.max(np.abs(arr[0])))
            b_al = float(np.max(np.sum(np.abs(arr[1:]), axis=0))) if arr.shape[0] > 1 else 0.0
            beta[m] = max(beta.get(m, 0.0), b_a, b_al)
            if arr.shape[0] > 2 and np.any(arr[2:] != 0):
                L = 1.0
    C = max(beta.get(data.zero, 0.0), np.finfo(float).tiny)
    B = 0.0
    for m, bm in beta.items():
        d = sum(m)
        if d >= 1 and bm > 0:
            B = max(B, (bm / (rho(N, d) * C)) ** (1.0 / d))
    return {"B": B, "C": C, "L": L}


# ---------------------------------------------------------------------------
# operators on the grid
# ---------------------------------------------------------------------------

def integral_operator(alpha: np.ndarray, h: float, Jmax: Optional[int] = None) -> np.ndarray:
    """``I[α](z_j, ξ_k) = -∫_0^{ξ_k} α(z_j + t, ξ_k - t) dt`` by the trapezoid rule.

    ``alpha`` has shape (..., Jmax+1, T+1); entries with ``j + k > Jmax`` are
    outside the characteristic domain and returned as 0.
    """
    alpha = np.asarray(alpha, dtype=complex)
    J1, T1 = alpha.shape[-2:]
    if Jmax is None:
        Jmax = J1 - 1
    if T1 - 1 > Jmax:
        raise ValueError("ξ-extent exceeds z-extent (geometry underflow)")
    # shear to (ζ = j + k, t) so each characteristic is a row
    tau = np.zeros(alpha.shape[:-2] + (Jmax + 1, T1), dtype=complex)
    for t in range(T1):
        tau[..., t:, t] = alpha[..., : Jmax + 1 - t, t]
    cum = np.cumsum(tau, axis=-1)
    trap = cum - 0.5 * tau[..., :1] - 0.5 * tau
    trap[..., 0] = 0.0
    out = np.zeros_like(alpha)
    for k in range(T1):
        out[..., : Jmax + 1 - k, k] = -h * trap[..., k:, k]
    return out


class _FFTConv:
    """Trapezoidal convolutions along the last axis with cached transforms."""

    def __init__(self, T1: int, h: float):
        self.T1 = T1
        self.h = h
        self.nfft = 1 << (2 * T1 - 1).bit_length()

    def fft(self, a):
        return np.fft.fft(a, self.nfft, axis=-1)

    def finish(self, spec_sum, endpoint_sum):
        full = np.fft.ifft(spec_sum, axis=-1)[..., : self.T1]
        out = self.h * (full - 0.5 * endpoint_sum)
        out[..., 0] = 0.0
        return out

    @staticmethod
    def endpoints(a, b):
        return a * b[..., :1] + a[..., :1] * b


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class GrowthFit:
    """``|σ(z, ξ)| <= D e^{K ξ}`` on the Laplace rows."""

    D: float
    K: float

    def bound(self, xi):
        return self.D * np.exp(self.K * np.asarray(xi))


@dataclass
class BorelField:
    """σ samples ``S[i, j, k] = σ^i(z_j, ξ_k)`` (zero outside ``j + k <= Jmax``)."""

    S: np.ndarray
    geometry: GridGeometry
    theta: float = 0.0
    rhs: Optional[np.ndarray] = None

    @property
    def N(self) -> int:
        return self.S.shape[0]

    def row(self, i: int, j: int):
        from .series import RayGridFunction
        g = self.geometry
        kmax = min(g.T, g.Jmax - j)
        return RayGridFunction(self.S[i, j, : kmax + 1], g.h, 0.0, 1.0)

    def tau(self, i: int) -> np.ndarray:
        """σ in characteristic coordinates ``τ[ζ, t] = σ(ζ - t, t)``."""
        g = self.geometry
        out = np.full((g.Jmax + 1, g.T + 1), np.nan + 0j)
        for t in range(g.T + 1):
            out[t:, t] = self.S[i, : g.Jmax + 1 - t, t]
        return out

    def to_csv(self, path, stride: int = 1) -> None:
        g = self.geometry
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["comp", "zeta", "t", "re", "im"])
            for i in range(self.N):
                for j in range(0, g.Jmax + 1, stride):
                    for k in range(0, min(g.T, g.Jmax - j) + 1, stride):
                        v = self.S[i, j, k]
                        w.writerow([i + 1, repr(float(g.zmin + (j + k) * g.h)), repr(float(k * g.h)),
                                    repr(float(v.real)), repr(float(v.imag))])


@dataclass
class SuccessiveResult:
    field: BorelField
    growth: GrowthFit
    norms: np.ndarray               # sup_{valid} |σ_n|
    term_constants: np.ndarray      # max |σ_n| n! / (ξ^n e^{Lξ}) over the grid
    tail: float
    march_difference: float
    L: float
    n_terms: int


def fit_growth(S: np.ndarray, geometry: GridGeometry) -> GrowthFit:
    """Fit ``(D, K)`` from the envelope over the Laplace rows ``j <= Jx``."""
    g = geometry
    env = np.max(np.abs(S[:, : g.Jx + 1, :]), axis=(0, 1))
    if not np.any(env > 0):
        return GrowthFit(0.0, 0.0)
    xi = g.xi
    half = len(xi) // 2
    with np.errstate(divide="ignore"):
        logs = np.log(np.maximum(env, np.finfo(float).tiny))
    slope = np.polyfit(xi[half:], logs[half:], 1)[0] if len(xi) - half >= 2 else 0.0
    K = max(0.0, float(slope))
    D = float(np.max(env * np.exp(-K * xi)))
    return GrowthFit(D, K)


# ---------------------------------------------------------------------------
# Volterra march
# ---------------------------------------------------------------------------

def _prefix(m: MultiIndex) -> Tuple[MultiIndex, int]:
    """Split ``m = prefix + e_l`` with ``l`` the last nonzero slot."""
    l = max(j for j, v in enumerate(m) if v)
    p = list(m)
    p[l] -= 1
    return tuple(p), l


def _closure(ms: Sequence[MultiIndex]) -> List[MultiIndex]:
    out = set()
    for m in ms:
        while sum(m) >= 1:
            out.add(m)
            m, _ = _prefix(m)
    return sorted(out, key=lambda m: (sum(m), m[::-1]))


def volterra_march(data: BorelData) -> BorelField:
    """Solve the discrete integral equation level by level in ξ.

    At level ``k`` the unknowns ``σ(·, k)`` enter only through trapezoid
    endpoint weights, and the right-hand side is affine in them, so each
    node needs one N×N linear solve.  This is the same discrete equation
    whose Neumann series :func:`successive_approximations` sums.
    """
    g = data.geometry
    N, h, T, Jm = data.N, g.h, g.T, g.Jmax
    J1, T1 = Jm + 1, T + 1
    ms = data.multi_indices()
    chain = _closure(ms)
    a0 = data.a0()
    al0 = data.alpha0()
    S = np.zeros((N, J1, T1), dtype=complex)
    RHS = np.zeros((N, J1, T1), dtype=complex)
    P = {m: np.zeros((J1, T1), dtype=complex) for m in chain if sum(m) >= 2}
    units = [unit_index(N, l) for l in range(N)]

    def Pget(m, rows, col):
        if sum(m) == 1:
            return S[m.index(1), :rows, col]
        return P[m][:rows, col]

    a_terms = [(i, m, data.a[i][m]) for i in range(N) for m in ms if m in data.a[i]]
    al_terms = [(i, m, data.alpha[i][m]) for i in range(N) for m in ms if m in data.alpha[i]]

    # level 0
    S[:, :, 0] = -a0
    if al0 is not None:
        RHS[:, :, 0] = al0[:, :, 0]
    for i, m, arr in a_terms:
        if sum(m) == 1:
            RHS[i, :, 0] += arr * S[m.index(1), :, 0]
    acc = np.zeros((N, J1), dtype=complex)

    for k in range(1, T1):
        R = Jm - k + 1
        inter_P = {}
        for m in chain:
            if sum(m) < 2:
                continue
            pre, l = _prefix(m)
            A = P[pre] if sum(pre) >= 2 else S[pre.index(1)]
            inter_P[m] = np.einsum("ju,ju->j", A[:R, k - 1 : 0 : -1], S[l, :R, 1:k])
        inter_al = {}
        for i, m, arr in al_terms:
            X = P[m] if sum(m) >= 2 else S[m.index(1)]
            inter_al[(i, m)] = np.einsum("ju,ju->j", arr[:R, k - 1 : 0 : -1], X[:R, 1:k])

        def evaluate(U):
            Pk = {}
            for l in range(N):
                Pk[units[l]] = U[l]
            for m in chain:
                if sum(m) < 2:
                    continue
                pre, l = _prefix(m)
                pre0 = S[pre.index(1), :R, 0] if sum(pre) == 1 else 0.0
                Pk[m] = h * (inter_P[m] + 0.5 * Pk[pre] * S[l, :R, 0] + 0.5 * pre0 * U[l])
            out = np.zeros((N, R), dtype=complex)
            if al0 is not None:
                out += al0[:, :R, k]
            for i, m, arr in a_terms:
                out[i] += arr[:R] * Pk[m]
            for i, m, arr in al_terms:
                m0 = S[m.index(1), :R, 0] if sum(m) == 1 else 0.0
                out[i] += h * (inter_al[(i, m)] + 0.5 * arr[:R, k] * m0 + 0.5 * arr[:R, 0] * Pk[m])
            return out, Pk

        c, _ = evaluate(np.zeros((N, R), dtype=complex))
        Lmat = np.zeros((R, N, N), dtype=complex)
        for l in range(N):
            e = np.zeros((N, R), dtype=complex)
            e[l] = 1.0
            Lmat[:, :, l] = (evaluate(e)[0] - c).T
        zeta = np.arange(R) + k
        E = -a0[:, zeta] - h * (acc[:, zeta] + 0.5 * RHS[:, zeta, 0])
        M = np.eye(N)[None] + 0.5 * h * Lmat
        U = np.linalg.solve(M, (E - 0.5 * h * c).T[..., None])[..., 0].T
        rhs_k, Pk = evaluate(U)
        S[:, :R, k] = U
        RHS[:, :R, k] = rhs_k
        for m in chain:
            if sum(m) >= 2:
                P[m][:R, k] = Pk[m]
        acc[:, zeta] += rhs_k
    return BorelField(S, g, data.theta, RHS)


# ---------------------------------------------------------------------------
# successive approximations
# ---------------------------------------------------------------------------

def successive_approximations(data: BorelData, nmax: int = 200, tol: float = 1e-10,
                              march: Optional[BorelField] = None,
                              check: bool = True) -> SuccessiveResult:
    """Sum ``σ = σ_0 + σ_1 + ...`` with

    ``σ_0 = -a_0(z + ξ)`` and, for ``n >= 1``,
    ``σ_n = I[ [n = 1] α_0 + sum_{1 <= |m| <= n} (a_m [σ^{*m}]_{n-|m|} + α_m * [σ^{*m}]_{n-|m|-1}) ]``

    where ``[σ^{*m}]_q`` is the grade-q part of the convolution power of
    ``sum_n σ_n ε^n`` (a term with index ``m`` carries weight ``ε^{|m|}``
    and an ``α_m`` factor one more).  Stops once the tail estimate from the
    per-term norms is below ``tol`` (relative to ``max(1, sup|σ|)``), then
    compares with the Volterra march.
    """
    g = data.geometry
    N, h, T, Jm = data.N, g.h, g.T, g.Jmax
    J1, T1 = Jm + 1, T + 1
    mask = g.valid_mask()
    conv = _FFTConv(T1, h)
    ms = data.multi_indices()
    chain = _closure(ms)
    a0 = data.a0()
    al0 = data.alpha0()
    consts = majorant_constants(data)
    L = consts["L"]

    sigma0 = np.zeros((N, J1, T1), dtype=complex)
    for k in range(T1):
        sigma0[:, : J1 - k, k] = -a0[:, k:]
    sig: List[np.ndarray] = [sigma0]
    sigF: List[np.ndarray] = [conv.fft(sigma0)]
    # grade-q parts of convolution powers, real space and spectra
    Pq: Dict[MultiIndex, List[np.ndarray]] = {m: [] for m in chain if sum(m) >= 2}
    PqF: Dict[MultiIndex, List[np.ndarray]] = {m: [] for m in chain if sum(m) >= 2}
    alF = {(i, m): conv.fft(data.alpha[i][m]) for i in range(N) for m in ms if m in data.alpha[i]}

    def grade(m, q):
        if sum(m) == 1:
            l = m.index(1)
            return sig[q][l], sigF[q][l]
        lst, lstF = Pq[m], PqF[m]
        while len(lst) <= q:
            r_q = len(lst)
            pre, l = _prefix(m)
            spec_sum = 0.0
            end_sum = 0.0
            for r in range(r_q + 1):
                A, AF = grade(pre, r)
                B, BF = sig[r_q - r][l], sigF[r_q - r][l]
                spec_sum = spec_sum + AF * BF
                end_sum = end_sum + conv.endpoints(A, B)
            val = conv.finish(spec_sum, end_sum) * mask
            lst.append(val)
            lstF.append(conv.fft(val))
        return lst[q], lstF[q]

    xi = g.xi
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = np.log(np.where(xi > 0, xi, 1.0))
    total = sigma0.copy()
    norms = [float(np.max(np.abs(sigma0[:, mask])))] if N else [0.0]
    consts_n = [norms[0]]
    tail = math.inf
    converged = False
    for n in range(1, nmax + 1):
        rhs = np.zeros((N, J1, T1), dtype=complex)
        if n == 1 and al0 is not None:
            rhs += al0
        for i in range(N):
            for m in ms:
                d = sum(m)
                if m in data.a[i] and d <= n:
                    rhs[i] += data.a[i][m][:, None] * grade(m, n - d)[0]
                if m in data.alpha[i] and d <= n - 1:
                    X, XF = grade(m, n - d - 1)
                    rhs[i] += conv.finish(alF[(i, m)] * XF,
                                          conv.endpoints(data.alpha[i][m], X))
        rhs *= mask
        sn = integral_operator(rhs, h, Jm)
        sig.append(sn)
        sigF.append(conv.fft(sn))
        total += sn
        nrm = float(np.max(np.abs(sn[:, mask])))
        norms.append(nrm)
        # |σ_n| n! / (ξ^n e^{Lξ}) on nodes that resolve an n-fold integral
        k0 = max(1, RESOLVED_STEPS * n)
        if nrm > 0 and k0 <= T:
            scale_log = math.lgamma(n + 1) - n * logw[k0:] - L * xi[k0:]
            ratio = np.abs(sn[:, :, k0:]) * np.exp(scale_log)[None, None, :]
            consts_n.append(float(np.max(ratio[:, mask[:, k0:]])))
        else:
            consts_n.append(0.0 if nrm == 0 else math.nan)
        ref = max(1.0, float(np.max(np.abs(total[:, mask]))))
        if nrm == 0.0:
            tail = 0.0
            converged = True
            break
        q = nrm / norms[-2] if norms[-2] > 0 else 1.0
        if q < 0.9:
            tail = nrm * q / (1 - q)
            if tail <= tol * ref and nrm <= tol * ref:
                converged = True
                break
    if not converged:
        raise ConvergenceError("successive approximations did not converge within "
                               f"{nmax} terms; last norms {np.array(norms[-5:])}")
    n_terms = len(sig) - 1
    if march is None:
        march = volterra_march(data)
    diff = float(np.max(np.abs(total[:, mask] - march.S[:, mask])))
    ref = max(1.0, float(np.max(np.abs(total[:, mask]))))
    if check and diff > 10 * tol * ref:
        raise OracleDisagreement(f"successive approximations and Volterra march disagree by "
                                 f"{diff:.3e} (> 10 tol)")
    fld = BorelField(total, g, data.theta, march.rhs)
    return SuccessiveResult(fld, fit_growth(total, g), np.array(norms), np.array(consts_n),
                            tail, diff, L, n_terms)


def pde_residual(fld: BorelField, interior: int = 2) -> float:
    """Max of ``|∂_z σ - ∂_ξ σ - RHS|`` by central differences on interior nodes."""
    if fld.rhs is None:
        raise ValueError("field carries no right-hand side samples")
    g = fld.geometry
    S, R, h = fld.S, fld.rhs, g.h
    worst = 0.0
    for k in range(interior, g.T - interior):
        jmax = g.Jmax - k - interior
        if jmax <= interior:
            break
        js = slice(interior, jmax)
        dz = (S[:, interior + 1 : jmax + 1, k] - S[:, interior - 1 : jmax - 1, k]) / (2 * h)
        dxi = (S[:, js, k + 1] - S[:, js, k - 1]) / (2 * h)
        worst = max(worst, float(np.max(np.abs(dz - dxi - R[:, js, k]))))
    return worst


def taylor_consistency(fld: BorelField, sol: FormalSolution, spectral: SpectralData,
                       maps: Sequence[LiouvilleMap], order: int = 3, rows=None,
                       fit_points: int = 14, fit_degree: int = 9) -> np.ndarray:
    """Compare ξ-Taylor coefficients of σ at ξ = 0 with the formal Borel transform.

    With ``f̂ = f_0 + ħ f_1 + ħ P_0^{-1} ĝ`` the transformed series has
    ``g_n = P_0 f_{n+1}``, so the n-th ξ-coefficient of σ^i (after the
    θ-rotation) is ``e^{i(n+1)θ} (P_0 f_{n+2})^i / n!`` at
    ``x = Φ_i^{-1}(e^{iθ} z)``.  Grid coefficients come from a least-squares
    polynomial fit in ξ.  Returns the relative error per order, shape
    (order+1,).
    """
    g = fld.geometry
    if sol.nmax < order + 2:
        raise ValueError("formal solution too short for the requested order")
    rows = range(0, g.Jx + 1, max(1, g.Jx // 8)) if rows is None else rows
    xi = g.xi[:fit_points]
    V = np.vander(xi, fit_degree + 1, increasing=True)
    rot = np.exp(1j * fld.theta)
    errs = np.zeros(order + 1)
    for j in rows:
        z = g.zmin + j * g.h
        for i in range(fld.N):
            coef = np.linalg.lstsq(V, fld.S[i, j, :fit_points], rcond=None)[0]
            x = maps[i].inverse(rot * z)
            Pm = spectral.P(x)
            for n in range(order + 1):
                ref = rot ** (n + 1) * (Pm @ sol.coeffs[n + 2](x))[i] / math.factorial(n)
                scale = max(abs(ref), 1e-300)
                errs[n] = max(errs[n], abs(coef[n] - ref) / max(scale, 1.0))
    return errs
