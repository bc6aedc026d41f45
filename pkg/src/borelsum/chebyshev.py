"""Chebyshev interpolation on a complex segment.

Nodes are the Chebyshev extrema ``t_k = cos(pi k / n)`` mapped onto the
segment ``x(t) = mid + half * t``; values may be scalar, vector or matrix
valued (extra trailing axes).  Evaluation uses the barycentric formula and
returns the stored values exactly at the nodes.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from scipy.fft import dct


def cheb_points(n: int) -> np.ndarray:
    return np.cos(np.pi * np.arange(n + 1) / n)


class ChebInterpolant:
    def __init__(self, a: complex, b: complex, values):
        self.a = complex(a)
        self.b = complex(b)
        if self.a == self.b:
            raise ValueError("degenerate segment")
        self.values = np.asarray(values, dtype=complex)
        if self.values.shape[0] < 2:
            raise ValueError("need at least two nodes")
        self.values.setflags(write=False)
        self._coeffs = None

    @property
    def degree(self) -> int:
        return self.values.shape[0] - 1

    @property
    def mid(self) -> complex:
        return 0.5 * (self.a + self.b)

    @property
    def half(self) -> complex:
        return 0.5 * (self.b - self.a)

    @property
    def t_nodes(self) -> np.ndarray:
        return cheb_points(self.degree)

    @property
    def nodes(self) -> np.ndarray:
        return self.mid + self.half * self.t_nodes

    @staticmethod
    def nodes_for(a, b, degree: int) -> np.ndarray:
        a, b = complex(a), complex(b)
        return 0.5 * (a + b) + 0.5 * (b - a) * cheb_points(degree)

    @classmethod
    def from_function(cls, f, a, b, degree: int = 64) -> "ChebInterpolant":
        x = cls.nodes_for(a, b, degree)
        return cls(a, b, np.asarray([f(xi) for xi in x], dtype=complex))

    def to_t(self, x):
        return (np.asarray(x, dtype=complex) - self.mid) / self.half

    # coefficients ---------------------------------------------------------
    @property
    def coeffs(self) -> np.ndarray:
        if self._coeffs is None:
            n = self.degree
            v = self.values
            c = (dct(v.real, type=1, axis=0) + 1j * dct(v.imag, type=1, axis=0)) / n
            c[0] *= 0.5
            c[-1] *= 0.5
            self._coeffs = c
        return self._coeffs

    @classmethod
    def from_coeffs(cls, a, b, coeffs) -> "ChebInterpolant":
        coeffs = np.asarray(coeffs, dtype=complex)
        n = coeffs.shape[0] - 1
        t = cheb_points(n)
        vals = npcheb.chebval(t, coeffs, tensor=True)
        # chebval puts the evaluation axis last
        vals = np.moveaxis(vals, -1, 0)
        return cls(a, b, vals)

    # evaluation -----------------------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        scalar = x.ndim == 0
        t = np.atleast_1d(self.to_t(x))
        n = self.degree
        tk = self.t_nodes
        w = (-1.0) ** np.arange(n + 1)
        w[0] *= 0.5
        w[-1] *= 0.5
        diff = t[:, None] - tk[None, :]
        exact = diff == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            kern = w[None, :] / diff
        kern[exact.any(axis=1)] = 0.0
        kern[exact] = 1.0
        denom = kern.sum(axis=1)
        vals = self.values.reshape(n + 1, -1)
        out = (kern @ vals) / denom[:, None]
        out = out.reshape((t.size,) + self.values.shape[1:])
        return out[0] if scalar else out.reshape(x.shape + self.values.shape[1:])

    def sup_norm(self) -> float:
        v = np.abs(self.values)
        return float(v.reshape(v.shape[0], -1).max()) if v.size else 0.0

    # calculus -------------------------------------------------------------
    def derivative(self) -> "ChebInterpolant":
        dc = npcheb.chebder(self.coeffs, axis=0) / self.half
        pad = np.zeros((1,) + dc.shape[1:], dtype=complex)
        return ChebInterpolant.from_coeffs(self.a, self.b, np.concatenate([dc, pad]))

    def antiderivative(self, x0) -> "ChebInterpolant":
        """``x ↦ ∫_{x0}^x`` of this interpolant (Clenshaw-Curtis exact on the interpolant)."""
        ic = npcheb.chebint(self.coeffs, axis=0) * self.half
        t0 = self.to_t(x0)
        base = npcheb.chebval(complex(t0), ic)
        ic = ic.copy()
        ic[0] = ic[0] - base
        return ChebInterpolant.from_coeffs(self.a, self.b, ic)

    def map_values(self, fn) -> "ChebInterpolant":
        return ChebInterpolant(self.a, self.b, fn(self.values))

    def component(self, *index) -> "ChebInterpolant":
        return ChebInterpolant(self.a, self.b, self.values[(slice(None),) + index])

    def contains(self, x, tol: float = 1e-12) -> bool:
        t = self.to_t(x)
        return bool(abs(t.imag) <= tol and -1 - tol <= t.real <= 1 + tol)

    def __repr__(self):
        return (f"ChebInterpolant([{self.a}, {self.b}], degree={self.degree}, "
                f"shape={self.values.shape[1:]})")
