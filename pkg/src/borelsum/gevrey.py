"""Gevrey diagnostics and majorant certificates.

``gevrey_fit`` estimates ``(C, M)`` with ``|f_n| <= C M^n n!`` from sampled
coefficient norms.  ``majorant_sequence`` evaluates the scalar majorant
recursions (``formal`` for the ħ-coefficients, ``borel`` for the terms of
the successive-approximation series), and ``ift_radius`` locates the
radius of convergence of their generating function by continuation of its
functional equation.
"""

from __future__ import annotations

import csv
import math
import operator
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .exceptions import ConvergenceError
from .series import PowerCache, enumerate_multi_indices, power_product_sum, rho, \
    series_compose_scalar

OVERFLOW = 1e300


# ---------------------------------------------------------------------------
# Gevrey fit
# ---------------------------------------------------------------------------

@dataclass
class GevreyFit:
    C: float
    M: float
    roots: np.ndarray                 # (|f_n|/n!)^(1/n), n >= 1
    log_margin: np.ndarray            # log(C M^n n!) - log|f_n| (>= 0 where the bound holds)
    flags: List[str] = field(default_factory=list)

    def bound(self, n) -> np.ndarray:
        n = np.asarray(n)
        return self.C * self.M ** n * np.vectorize(math.factorial)(n)

    def holds(self, norms, rtol: float = 1e-12) -> bool:
        norms = np.asarray(norms, dtype=float)
        return bool(np.all(norms <= self.bound(np.arange(len(norms))) * (1 + rtol)))


def _log_factorial(n):
    return np.array([math.lgamma(k + 1) for k in np.atleast_1d(n)])


def gevrey_fit(norms: Sequence[float]) -> GevreyFit:
    """Fit ``|f_n| <= C M^n n!``.

    ``M`` is the largest of ``(|f_n|/n!)^(1/n)`` after discarding the first
    quarter of the samples (start-up transients), and ``C`` is the smallest
    constant making the bound hold for every sample.
    """
    norms = np.abs(np.asarray(norms, dtype=float))
    if norms.size < 4:
        raise ValueError("gevrey_fit needs at least 4 samples")
    n = np.arange(norms.size)
    flags = []
    if not np.any(norms > 0):
        return GevreyFit(0.0, 1.0, np.zeros(norms.size - 1), np.zeros(norms.size), ["all_zero"])
    with np.errstate(divide="ignore"):
        logs = np.log(norms)
    lf = _log_factorial(n)
    roots = np.exp((logs[1:] - lf[1:]) / n[1:])
    start = max(1, norms.size // 4)
    M = float(np.max(roots[start - 1:]))
    if roots[-1] < 0.25 * np.max(roots):
        flags.append("convergent")
    if M <= 0:
        M = float(np.finfo(float).tiny)
        flags.append("M_zero")
    logC = np.max(logs - n * math.log(M) - lf)
    C = float(math.exp(logC))
    margin = logC + n * math.log(M) + lf - logs
    return GevreyFit(C, M, roots, margin, flags)


# ---------------------------------------------------------------------------
# majorant sequences
# ---------------------------------------------------------------------------

@dataclass
class MajorantSequence:
    """Values ``M_0..M_nmax`` of a majorant recursion.

    If the raw values overflow, the recursion is rerun on ``M_n s^n``;
    ``scale`` records ``s`` and ``log_values`` always holds ``log M_n``.
    """

    variant: str
    params: Dict[str, float]
    values: np.ndarray
    log_values: np.ndarray
    N: int = 1
    scale: float = 1.0
    flags: List[str] = field(default_factory=list)

    @property
    def nmax(self) -> int:
        return len(self.values) - 1

    def ratios(self) -> np.ndarray:
        # vanishing terms (log = -inf) give nan ratios
        with np.errstate(invalid="ignore"):
            return np.exp(np.diff(self.log_values))

    def to_csv(self, path) -> None:
        r = np.concatenate([[np.nan], self.ratios()])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "M_n", "log_M_n", "ratio"])
            for k, (v, lv, q) in enumerate(zip(self.values, self.log_values, r)):
                w.writerow([k, repr(float(v)), repr(float(lv)), repr(float(q))])


def _power_sums(cache, N, m, q):
    """``sum_{|𝐦|=m} sum_{|𝐧|=q} 𝐌^𝐦_𝐧`` with every component equal to the sequence."""
    if q < 0:
        return 0.0
    caches = [cache] * N
    return sum(float(power_product_sum(caches, mm, q)) for mm in enumerate_multi_indices(N, m))


class _PowerTable:
    """Lazily filled ``T[m][q] = [(c p)^m]_q`` for a sequence growing one term at a time.

    ``[p^m]_q`` only involves ``p_0..p_q``, so entries are final once
    computed.  With equal components,
    ``sum_{|𝐦|=m} sum_{|𝐧|=q} 𝐌^𝐦_𝐧 = [p^m]_q / rho_m``.
    """

    def __init__(self, factor: float = 1.0):
        # powers of (factor * p), which keeps intermediate sums in range
        self.factor = factor
        self.p: List[float] = []
        self.T: Dict[tuple, float] = {}

    def get(self, m: int, q: int) -> float:
        if q < 0:
            return 0.0
        if m == 0:
            return 1.0 if q == 0 else 0.0
        if q >= len(self.p):
            raise IndexError("power table needs later terms")
        key = (m, q)
        v = self.T.get(key)
        if v is None:
            if m == 1:
                v = self.factor * self.p[q]
            else:
                v = self.factor * math.fsum(self.get(m - 1, r) * self.p[q - r] for r in range(q + 1))
            self.T[key] = v
        return v


def _borel_recursion(B, C, nmax, N, s, direct=False):
    M: List[float] = []
    table = _PowerTable(B * s)
    for n in range(nmax + 1):
        total = 0.0
        if direct:
            cache = PowerCache(M + [0.0], operator.mul, 1.0)
            for m in range(n + 1):
                inner = _power_sums(cache, N, m, n - m) + s * _power_sums(cache, N, m, n - m - 1)
                total += rho(N, m) * C * (B * s) ** m * inner
        else:
            for m in range(n + 1):
                total += C * (table.get(m, n - m) + s * table.get(m, n - m - 1))
        M.append(total)
        table.p.append(total)
    return np.array(M)


def _formal_recursion(A, B, nmax, N, s, direct=False):
    M: List[float] = [0.0]
    table = _PowerTable(B)
    table.p.append(0.0)
    for n in range(nmax):
        acc = M[n]
        cache = PowerCache(M + [0.0], operator.mul, 1.0) if direct else None
        for k in range(n + 1):
            inner = 0.0
            for m in range(n - k + 1):
                if direct:
                    inner += rho(N, m) * B ** m * _power_sums(cache, N, m, n - k)
                else:
                    inner += table.get(m, n - k)
            acc += (B * s) ** k * inner
        M.append(A * A * s * acc)
        table.p.append(M[-1])
    return np.array(M)


def majorant_sequence(variant: str, params: Dict[str, float], nmax: int, N: int = 1,
                      direct: bool = False) -> MajorantSequence:
    """Evaluate the majorant recursion.

    ``borel`` (params B, C)::

        M_n = sum_{m=0}^n rho_m C B^m sum_{|𝐦|=m} ( sum_{|𝐧|=n-m} 𝐌^𝐦_𝐧 + sum_{|𝐧|=n-m-1} 𝐌^𝐦_𝐧 ),
        M_0 = C.

    ``formal`` (params A, B)::

        M_{n+1} = A^2 ( M_n + sum_{k=0}^n B^k sum_m sum_{|𝐦|=m} sum_{|𝐧|=n-k} rho_m B^m 𝐌^𝐦_𝐧 ),
        M_0 = 0.

    ``direct=True`` evaluates every 𝐌^𝐦_𝐧 through
    :func:`~borelsum.series.power_product_coeff` over all index pairs; the
    default collapses the equal-component sums to ``[p^m]_q / rho_m``
    (identical values, cubic instead of exponential cost in N).
    """
    if variant not in ("borel", "formal"):
        raise ValueError(f"unknown variant {variant!r}")
    if nmax < 0:
        raise ValueError("nmax must be >= 0")
    flags: List[str] = []
    if variant == "borel":
        B, C = float(params["B"]), float(params["C"])
        if B < 0 or C < 0:
            raise ValueError("B and C must be nonnegative")
        run = lambda s: _borel_recursion(B, C, nmax, N, s, direct)
    else:
        A, B = float(params["A"]), float(params["B"])
        if A <= 0 or B < 0:
            raise ValueError("A must be positive and B nonnegative")
        if A < 3:
            flags.append("A_below_3")
        run = lambda s: _formal_recursion(A, B, nmax, N, s, direct)
    def attempt(s):
        try:
            return run(s)
        except OverflowError:
            return np.full(nmax + 1, np.inf)

    scale = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        vals = attempt(1.0)
        for _ in range(8):
            if np.all(np.isfinite(vals)) and np.max(vals, initial=0.0) <= OVERFLOW:
                break
            finite = vals[np.isfinite(vals) & (vals > 0)]
            growth = np.max(np.exp(np.diff(np.log(finite)))) if finite.size > 2 else 1e3
            growth = min(growth, 1e100)
            scale /= max(growth, 2.0) * 2.0
            vals = attempt(scale)
        else:
            raise ConvergenceError("majorant recursion overflows even after rescaling")
    if scale != 1.0:
        flags.append("rescaled")
    with np.errstate(divide="ignore", over="ignore"):
        logs = np.log(vals) - np.arange(nmax + 1) * math.log(scale)
        raw = np.exp(logs) if scale != 1.0 else vals
    return MajorantSequence(variant, dict(params), raw, logs, N, scale, flags)


def functional_equation_residual(seq: MajorantSequence) -> np.ndarray:
    """Coefficients of the functional equation residual for the truncated ``p̂``.

    Borel: ``-p + (1+t) Q(tp)``, ``Q(u) = C/(1-Bu)``.  Formal:
    ``-p + A^2 (tp + t Q(t) Q(p))``, ``Q(u) = 1/(1-Bu)``.  Entries
    ``0..nmax`` vanish when the recursion is exact; they are returned
    relative to ``max(M_n, 1)`` of the same order.
    """
    n = seq.nmax
    s = seq.scale
    # the rescaled sequence M_n s^n stays finite
    p = np.exp(seq.log_values + np.arange(n + 1) * math.log(s))
    if seq.variant == "borel":
        B, C = seq.params["B"] * s, seq.params["C"]
        tp = np.concatenate([[0.0], p[:-1]])
        q = C * series_compose_scalar(np.ones(n + 1), B * tp, n)
        # (1 + t) with the t-factor scaled by s
        rhs = q + s * np.concatenate([[0.0], q[:-1]])
    else:
        A, B = seq.params["A"], seq.params["B"]
        Bs = B * s
        tp = np.concatenate([[0.0], p[:-1]])
        Qt = np.array([Bs ** m for m in range(n + 1)])
        Qp = series_compose_scalar(np.ones(n + 1), B * p, n)
        prod = np.convolve(Qt, Qp)[: n + 1]
        rhs = A * A * s * (tp + np.concatenate([[0.0], prod[:-1]]))
    res = rhs - p
    return res / np.maximum(np.abs(p), 1.0)


# ---------------------------------------------------------------------------
# radius of convergence
# ---------------------------------------------------------------------------

@dataclass
class RadiusResult:
    tstar: float
    Mbound: float
    p_at_tstar: float
    flags: List[str] = field(default_factory=list)


def _equation(variant, params):
    if variant == "borel":
        B, C = float(params["B"]), float(params["C"])

        def H(t, p):
            d = 1 - B * t * p
            return -p + (1 + t) * C / d, -1 + (1 + t) * C * B * t / d ** 2, d > 0
        return H, C
    A, B = float(params["A"]), float(params["B"])

    def H(t, p):
        d1, d2 = 1 - B * t, 1 - B * p
        val = -p + A * A * (t * p + t / (d1 * d2))
        dp = -1 + A * A * (t + t * B / (d1 * d2 ** 2))
        return val, dp, (d1 > 0 and d2 > 0)
    return H, 0.0


def _newton_scalar(H, t, p, tol=1e-15, maxiter=200):
    for _ in range(maxiter):
        val, dp, ok = H(t, p)
        if not ok or not np.isfinite(val):
            return None
        if abs(val) <= tol * max(1.0, abs(p)):
            return p
        if dp == 0:
            return None
        p = p - val / dp
    return None


def ift_radius(variant: str, params: Dict[str, float], t_max: float = 1e6,
               tol: float = 1e-12) -> RadiusResult:
    """Radius ``t*`` where the branch ``p(t)`` through ``p(0)`` stops existing.

    Real continuation in ``t`` with a doubling step brackets the first
    ``t`` at which Newton on ``H(t, ·) = 0`` fails (fold point where
    ``∂H/∂p = 0``, or exit from the domain of ``Q``); bisection then
    shrinks the bracket to ``tol``.  Returns ``Mbound = 1/t*``.
    """
    H, p0 = _equation(variant, params)
    val, dp, _ = H(0.0, p0)
    if abs(val) > 1e-14 or abs(dp) < 1e-14:
        raise ConvergenceError("functional equation is not solvable at t = 0")
    t_lo, p_lo = 0.0, p0
    step = 1e-3
    t_hi = None
    while t_lo < t_max:
        t = min(t_lo + step, t_max)
        p = _newton_scalar(H, t, p_lo)
        if p is None:
            t_hi = t
            break
        t_lo, p_lo = t, p
        step *= 2.0
    if t_hi is None:
        return RadiusResult(math.inf, 0.0, p_lo, ["infinite_radius"])
    while t_hi - t_lo > tol * max(1.0, t_lo):
        t = 0.5 * (t_lo + t_hi)
        p = _newton_scalar(H, t, p_lo)
        if p is None:
            t_hi = t
        else:
            t_lo, p_lo = t, p
        if t_hi - t_lo < 1e-300:
            raise ConvergenceError(f"continuation step underflow in bracket [{t_lo}, {t_hi}]")
    return RadiusResult(t_lo, 1.0 / t_lo, p_lo, [])


@dataclass
class Certificate:
    D: float
    tstar: float
    ratio_limit: float
    final_ratio: float
    ratio_error: float
    bound_holds: bool

    @property
    def passed(self) -> bool:
        return self.bound_holds


def certify_bound(seq: MajorantSequence, radius: Optional[RadiusResult] = None) -> Certificate:
    """Check ``M_n <= D (1/t*)^n`` and compare ``M_{n+1}/M_n`` with ``1/t*``."""
    if radius is None:
        radius = ift_radius(seq.variant, seq.params)
    n = np.arange(seq.nmax + 1)
    if not math.isfinite(radius.tstar):
        D = float(np.max(seq.values))
        return Certificate(D, math.inf, 0.0, 0.0, 0.0, True)
    logt = math.log(radius.tstar)
    finite = np.isfinite(seq.log_values)
    logD = float(np.max(seq.log_values[finite] + n[finite] * logt)) if finite.any() else -math.inf
    D = math.exp(logD) if logD > -math.inf else 0.0
    ok = bool(np.all(seq.log_values[finite] <= logD - n[finite] * logt + 1e-12))
    ratios = seq.ratios()
    final = float(ratios[-1]) if ratios.size else 0.0
    limit = 1.0 / radius.tstar
    return Certificate(D, radius.tstar, limit, final, abs(final - limit) / limit, ok)
