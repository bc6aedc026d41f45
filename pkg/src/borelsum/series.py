"""Multi-index combinatorics and truncated power-series arithmetic.

Everything downstream (formal recursion, standard form, majorants, the
Borel-plane iteration) is written in terms of the pieces in this module:

* :func:`enumerate_multi_indices` -- the index sets ``{m : |m| = k}``;
* :func:`power_product_coeff` -- the coefficient ``f^m_n`` of a product of
  powers of ħ-series, one factor per component;
* :class:`HbarSeries`, :class:`XiSeries` and :func:`formal_borel`;
* :class:`RayGridFunction` and the trapezoidal convolution on a ray;
* :class:`Poly`, a sparse polynomial in ``(ħ, w_1..w_M)`` used by
  :func:`truncated_compose`.

Coefficient values may be Python scalars, numpy arrays (one value per
collocation node) or any object supporting ``+`` and ``*``.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

MultiIndex = Tuple[int, ...]


# ---------------------------------------------------------------------------
# multi-indices
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _multi_indices(N: int, m: int) -> Tuple[MultiIndex, ...]:
    if N == 1:
        return ((m,),)
    out = []
    # colexicographic: the last entry varies slowest
    for last in range(m + 1):
        for head in _multi_indices(N - 1, m - last):
            out.append(head + (last,))
    return tuple(out)


def enumerate_multi_indices(N: int, m: int) -> List[MultiIndex]:
    """All ``N``-component nonnegative index vectors of degree ``m``.

    The order is colexicographic (compare the last entry first), so
    ``enumerate_multi_indices(2, 1) == [(1, 0), (0, 1)]``.  The list has
    ``binom(m + N - 1, N - 1)`` entries.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if m < 0:
        raise ValueError("m must be >= 0")
    return list(_multi_indices(N, m))


def rho(N: int, m: int) -> float:
    """Normalisation constant ``1 / #{m : |m| = m}``."""
    return 1.0 / math.comb(m + N - 1, N - 1)


def unit_index(N: int, j: int) -> MultiIndex:
    return tuple(1 if i == j else 0 for i in range(N))


def degree(m: Sequence[int]) -> int:
    return int(sum(m))


# ---------------------------------------------------------------------------
# power products  f^m_n
# ---------------------------------------------------------------------------

def _mul_series(a: Sequence, b: Sequence, order: int, mul: Callable) -> list:
    out = []
    for n in range(order + 1):
        acc = None
        for k in range(n + 1):
            if k < len(a) and n - k < len(b):
                term = mul(a[k], b[n - k])
                acc = term if acc is None else acc + term
        out.append(0 if acc is None else acc)
    return out


class PowerCache:
    """Memoised coefficients of ``(sum_k c_k ħ^k)^p`` for one sequence.

    ``coeff(p, q)`` is the ħ^q coefficient of the p-th power, i.e. the sum
    over compositions ``j_1 + .. + j_p = q`` of ``c_{j_1} .. c_{j_p}``.
    The zeroth power is the series ``1``.
    """

    def __init__(self, coeffs: Sequence, mul: Callable = operator.mul, one=1):
        self.coeffs = list(coeffs)
        self.mul = mul
        self.one = one
        self._powers: Dict[int, list] = {}

    def _zero(self):
        c0 = self.coeffs[0]
        return c0 * 0 if hasattr(c0, "__mul__") else 0

    def power(self, p: int, order: int) -> list:
        if order >= len(self.coeffs):
            raise IndexError(
                f"coefficient table covers orders < {len(self.coeffs)}, "
                f"order {order} requested")
        cached = self._powers.get(p)
        if cached is not None and len(cached) > order:
            return cached
        if p == 0:
            series = [self.one] + [self._zero() for _ in range(order)]
        elif p == 1:
            series = list(self.coeffs[: order + 1])
        else:
            half = self.power(p // 2, order)
            series = _mul_series(half, half, order, self.mul)
            if p % 2:
                series = _mul_series(series, self.coeffs, order, self.mul)
        self._powers[p] = series
        return series

    def coeff(self, p: int, q: int):
        return self.power(p, q)[q]


def power_product_coeff(coeff_table, m: Sequence[int], n: Sequence[int],
                        mul: Callable = operator.mul, caches=None):
    """Return ``f^m_n = prod_j sum_{|j_j| = n_j} f^j_{j_{j,1}} ... f^j_{j_{j,m_j}}``.

    ``coeff_table[j][k]`` is the ħ^k coefficient of component ``j``.  This
    is the contribution of the multi-index ``n`` to the ħ^|n| coefficient
    of ``f^m``.  ``caches`` may carry prebuilt :class:`PowerCache` objects
    (one per component) to share work between calls.
    """
    if len(m) != len(n):
        raise ValueError(f"index lengths differ: {len(m)} != {len(n)}")
    if caches is None:
        if len(coeff_table) != len(m):
            raise ValueError("coefficient table and index have different N")
        caches = [PowerCache(row, mul) for row in coeff_table]
    out = None
    for cache, mj, nj in zip(caches, m, n):
        if mj == 0:
            if nj > 0:
                return 0
            continue
        factor = cache.coeff(mj, nj)
        out = factor if out is None else mul(out, factor)
    return 1 if out is None else out


def power_product_sum(caches, m: Sequence[int], q: int, mul: Callable = operator.mul):
    """``sum_{|n| = q} f^m_n``, the ħ^q coefficient of ``f^m``."""
    N = len(m)
    acc = None
    for n in enumerate_multi_indices(N, q):
        term = power_product_coeff(None, m, n, mul=mul, caches=caches)
        if isinstance(term, int) and term == 0:
            continue
        acc = term if acc is None else acc + term
    return 0 if acc is None else acc


# ---------------------------------------------------------------------------
# ħ- and ξ-series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HbarSeries:
    """Truncated series ``sum_{n <= order} c_n ħ^n``."""

    coeffs: Tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(self.coeffs))
        if not self.coeffs:
            raise ValueError("empty series")

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, n):
        return self.coeffs[n]

    def __add__(self, other: "HbarSeries") -> "HbarSeries":
        k = min(self.order, other.order)
        return HbarSeries([a + b for a, b in zip(self.coeffs[: k + 1], other.coeffs)])

    def __mul__(self, other: "HbarSeries") -> "HbarSeries":
        k = min(self.order, other.order)
        return HbarSeries(_mul_series(self.coeffs, other.coeffs, k, operator.mul))

    def __call__(self, hbar):
        return sum(c * hbar ** n for n, c in enumerate(self.coeffs))


@dataclass(frozen=True)
class XiSeries:
    """Truncated series ``sum_{n <= order} c_n ξ^n`` (plain monomial coefficients)."""

    coeffs: Tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(self.coeffs))

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, n):
        return self.coeffs[n]

    def __call__(self, xi):
        return sum(c * xi ** n for n, c in enumerate(self.coeffs))

    def convolve(self, other: "XiSeries") -> "XiSeries":
        """Exact convolution using ``ξ^a/a! * ξ^b/b! = ξ^(a+b+1)/(a+b+1)!``."""
        out = [0.0] * (self.order + other.order + 2)
        for a, ca in enumerate(self.coeffs):
            for b, cb in enumerate(other.coeffs):
                w = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 1)
                out[a + b + 1] = out[a + b + 1] + ca * cb * w
        return XiSeries(out)

    def laplace(self) -> HbarSeries:
        """Term-wise Laplace transform ``ξ^n ↦ n! ħ^(n+1)`` (constant term 0)."""
        return HbarSeries([0] + [c * math.factorial(n) for n, c in enumerate(self.coeffs)])


def formal_borel(series: HbarSeries) -> Tuple[XiSeries, object]:
    """Formal Borel transform ``ħ^(n+1) ↦ ξ^n / n!``.

    Returns the ξ-series and the dropped constant term ``f_0``.
    """
    if series.order < 1:
        raise ValueError("formal Borel transform needs truncation order >= 1")
    c = series.coeffs
    return XiSeries([c[n + 1] / math.factorial(n) for n in range(series.order)]), c[0]


# ---------------------------------------------------------------------------
# grid functions on a ray
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RayGridFunction:
    """Samples at ``origin + k * h * direction`` for ``k = 0..len-1``."""

    values: np.ndarray
    h: float
    origin: complex = 0.0
    direction: complex = 1.0

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))

    @property
    def nodes(self) -> np.ndarray:
        return self.origin + self.direction * self.h * np.arange(len(self.values))


def trapezoid_convolve(a: np.ndarray, b: np.ndarray, h: float, axis: int = -1,
                       method: str = "auto") -> np.ndarray:
    """Trapezoidal approximation of ``∫_0^ξ a(ξ-y) b(y) dy`` at every node.

    Works along ``axis`` with the other axes broadcast.  The value at node
    0 is exactly zero.  ``method`` is ``"direct"``, ``"fft"`` or ``"auto"``.
    """
    a = np.moveaxis(np.asarray(a, dtype=complex), axis, -1)
    b = np.moveaxis(np.asarray(b, dtype=complex), axis, -1)
    a, b = np.broadcast_arrays(a, b)
    T = a.shape[-1]
    if method == "auto":
        method = "fft" if T > 64 else "direct"
    if method == "direct":
        full = np.zeros(a.shape, dtype=complex)
        for k in range(T):
            full[..., k] = np.sum(a[..., k::-1] * b[..., : k + 1], axis=-1)
    else:
        nfft = 1 << (2 * T - 1).bit_length()
        full = np.fft.ifft(np.fft.fft(a, nfft) * np.fft.fft(b, nfft))[..., :T]
    out = h * (full - 0.5 * a * b[..., :1] - 0.5 * a[..., :1] * b)
    out[..., 0] = 0.0
    return np.moveaxis(out, -1, axis)


def discrete_convolution(a: RayGridFunction, b: RayGridFunction) -> RayGridFunction:
    """Trapezoidal convolution of two grid functions sharing origin 0 and spacing."""
    if not math.isclose(a.h, b.h, rel_tol=1e-14):
        raise ValueError(f"spacing mismatch: {a.h} != {b.h}")
    if a.origin != 0 or b.origin != 0:
        raise ValueError("convolution requires origin 0")
    if a.direction != b.direction:
        raise ValueError("direction mismatch")
    T = min(len(a.values), len(b.values))
    if T < 2:
        raise ValueError("need at least two samples")
    # a ξ-step of size h along `direction` contributes dy = h * direction
    out = trapezoid_convolve(a.values[:T], b.values[:T], a.h) * a.direction
    return RayGridFunction(out, a.h, 0.0, a.direction)


# ---------------------------------------------------------------------------
# sparse polynomials in (ħ, w) and truncated composition
# ---------------------------------------------------------------------------

Key = Tuple[int, MultiIndex]


@dataclass
class Poly:
    """Sparse polynomial ``sum c[k, m] ħ^k w^m`` truncated at ħ-order ``order``.

    ``order=None`` means untruncated (exact finite polynomial).
    """

    nvars: int
    terms: Dict[Key, object] = field(default_factory=dict)
    order: int | None = None

    @classmethod
    def constant(cls, nvars: int, value, order=None) -> "Poly":
        return cls(nvars, {(0, (0,) * nvars): value}, order)

    @classmethod
    def variable(cls, nvars: int, j: int, order=None) -> "Poly":
        return cls(nvars, {(0, unit_index(nvars, j)): 1.0}, order)

    def _merge_order(self, other: "Poly"):
        if self.order is None:
            return other.order
        if other.order is None:
            return self.order
        return min(self.order, other.order)

    def __add__(self, other: "Poly") -> "Poly":
        order = self._merge_order(other)
        out = dict(self.terms)
        for key, c in other.terms.items():
            out[key] = out[key] + c if key in out else c
        return Poly(self.nvars, out, order).truncate(order)

    def __sub__(self, other: "Poly") -> "Poly":
        return self + other.scale(-1.0)

    def scale(self, s) -> "Poly":
        return Poly(self.nvars, {k: c * s for k, c in self.terms.items()}, self.order)

    def __mul__(self, other: "Poly") -> "Poly":
        order = self._merge_order(other)
        out: Dict[Key, object] = {}
        for (k1, m1), c1 in self.terms.items():
            for (k2, m2), c2 in other.terms.items():
                k = k1 + k2
                if order is not None and k > order:
                    continue
                key = (k, tuple(a + b for a, b in zip(m1, m2)))
                term = c1 * c2
                out[key] = out[key] + term if key in out else term
        return Poly(self.nvars, out, order)

    def truncate(self, order) -> "Poly":
        if order is None:
            return self
        return Poly(self.nvars, {k: c for k, c in self.terms.items() if k[0] <= order}, order)

    def hbar_shift(self, s: int) -> "Poly":
        """Multiply by ħ^s."""
        order = None if self.order is None else self.order + s
        return Poly(self.nvars, {(k + s, m): c for (k, m), c in self.terms.items()}, order)

    def coefficient(self, k: int, m: MultiIndex, default=0):
        return self.terms.get((k, tuple(m)), default)

    def hbar_part(self, k: int) -> Dict[MultiIndex, object]:
        return {m: c for (kk, m), c in self.terms.items() if kk == k}

    def __call__(self, hbar, w: Sequence):
        total = 0
        for (k, m), c in self.terms.items():
            mono = hbar ** k
            for wj, mj in zip(w, m):
                mono = mono * wj ** mj
            total = total + c * mono
        return total


def truncated_compose(outer: Mapping[Key, object], inner: Sequence[Poly],
                      order: int | None = None) -> Poly:
    """Expand ``outer(ħ, y)`` with ``y_j = inner[j](ħ, w)``.

    ``outer`` maps ``(k, m)`` to the coefficient of ``ħ^k y^m``.  Powers of
    each ``inner[j]`` are memoised, and every output coefficient is an exact
    finite sum over the table (no numerical differentiation).  The result is
    truncated at ħ-order ``order``; requesting an order beyond a declared
    truncation of an inner series is an error.
    """
    if not inner:
        raise ValueError("need at least one inner series")
    nvars = inner[0].nvars
    for p in inner:
        if p.order is not None and order is not None and order > p.order:
            raise ValueError(
                f"requested order {order} exceeds inner truncation order {p.order}")
        if p.order is not None and order is None:
            raise ValueError("inner series is truncated; an output order is required")
    pows: List[Dict[int, Poly]] = [{0: Poly.constant(nvars, 1.0, order)} for _ in inner]

    def power(j: int, p: int) -> Poly:
        table = pows[j]
        if p not in table:
            table[p] = (power(j, p - 1) * inner[j]).truncate(order)
        return table[p]

    result = Poly(nvars, {}, order)
    for (k, m), c in outer.items():
        if order is not None and k > order:
            continue
        term = Poly.constant(nvars, c, order)
        for j, mj in enumerate(m):
            if mj:
                term = term * power(j, mj)
        result = result + term.hbar_shift(k).truncate(order)
    return result


def series_compose_scalar(coeffs: Sequence[float], inner: np.ndarray, order: int) -> np.ndarray:
    """Coefficients of ``sum_m coeffs[m] * inner(t)^m`` truncated at ``t^order``."""
    inner = np.asarray(inner, dtype=float)[: order + 1]
    out = np.zeros(order + 1)
    power = np.zeros(order + 1)
    power[0] = 1.0
    for c in coeffs:
        out += c * power
        power = np.convolve(power, inner)[: order + 1]
        if not power.any():
            break
    return out
