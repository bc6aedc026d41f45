"""Truncated Taylor jets, vectorised over evaluation points.

A :class:`Jet` holds the Taylor coefficients ``c_0..c_{L-1}`` of a function
around each of a batch of points (last array axis = order).  Arithmetic is
exact on truncated series, so repeated differentiation of jets does not
amplify rounding the way repeated spectral differentiation does.
"""

from __future__ import annotations

import numpy as np


class Jet:
    __slots__ = ("c",)
    __array_priority__ = 1000

    def __init__(self, coeffs):
        self.c = np.asarray(coeffs, dtype=complex)

    # construction -------------------------------------------------------
    @classmethod
    def variable(cls, points, order: int) -> "Jet":
        """The identity function ``x`` expanded around ``points``."""
        points = np.asarray(points, dtype=complex)
        c = np.zeros(points.shape + (order,), dtype=complex)
        c[..., 0] = points
        if order > 1:
            c[..., 1] = 1.0
        return cls(c)

    @classmethod
    def constant(cls, value, shape, order: int) -> "Jet":
        c = np.zeros(tuple(shape) + (order,), dtype=complex)
        c[..., 0] = value
        return cls(c)

    @property
    def order(self) -> int:
        return self.c.shape[-1]

    @property
    def value(self) -> np.ndarray:
        return self.c[..., 0]

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        c = np.zeros(np.broadcast_shapes(np.shape(other), self.c.shape[:-1]) + (self.order,),
                     dtype=complex)
        c[..., 0] = other
        return Jet(c)

    def copy(self) -> "Jet":
        return Jet(self.c.copy())

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.c + other.c)
        c = self.c.copy()
        c[..., 0] = c[..., 0] + other
        return Jet(c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c * np.asarray(other)[..., None])
        a, b = np.broadcast_arrays(self.c, other.c)
        L = a.shape[-1]
        out = np.zeros(a.shape, dtype=complex)
        for k in range(L):
            out[..., k:] += a[..., k : k + 1] * b[..., : L - k]
        return Jet(out)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        b = self.c
        L = b.shape[-1]
        q = np.zeros(b.shape, dtype=complex)
        q[..., 0] = 1.0 / b[..., 0]
        for k in range(1, L):
            acc = np.sum(b[..., 1 : k + 1] * q[..., k - 1 :: -1][..., :k], axis=-1)
            q[..., k] = -acc / b[..., 0]
        return Jet(q)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c / np.asarray(other)[..., None])
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Jet) or int(p) != p:
            raise TypeError("jets support integer powers only")
        p = int(p)
        if p < 0:
            return self.reciprocal() ** (-p)
        result = self._lift(1.0)
        base = self
        while p:
            if p & 1:
                result = result * base
            p >>= 1
            if p:
                base = base * base
        return result

    def exp(self) -> "Jet":
        a = self.c
        L = a.shape[-1]
        e = np.zeros(a.shape, dtype=complex)
        e[..., 0] = np.exp(a[..., 0])
        k_a = a * np.arange(L)
        for k in range(1, L):
            e[..., k] = np.sum(k_a[..., 1 : k + 1] * e[..., k - 1 :: -1][..., :k], axis=-1) / k
        return Jet(e)

    def log(self) -> "Jet":
        a = self.c
        L = a.shape[-1]
        lg = np.zeros(a.shape, dtype=complex)
        lg[..., 0] = np.log(a[..., 0])
        for k in range(1, L):
            acc = k * a[..., k]
            for i in range(1, k):
                acc = acc - i * lg[..., i] * a[..., k - i]
            lg[..., k] = acc / (k * a[..., 0])
        return Jet(lg)

    def deriv(self) -> "Jet":
        """d/dx; the top coefficient becomes zero (unknown)."""
        L = self.order
        out = np.zeros(self.c.shape, dtype=complex)
        out[..., : L - 1] = self.c[..., 1:] * np.arange(1, L)
        return Jet(out)

    def __repr__(self):
        return f"Jet(shape={self.c.shape[:-1]}, order={self.order})"


def jexp(v):
    return v.exp() if isinstance(v, Jet) else np.exp(v)


def jlog(v):
    return v.log() if isinstance(v, Jet) else np.log(v)


def jet_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``A(t) X(t) = B(t)`` order by order.

    ``A`` has shape (..., N, N, L) and ``B`` shape (..., N, L); returns X
    with the shape of ``B``.
    """
    L = B.shape[-1]
    X = np.zeros(np.broadcast_shapes(B.shape, A.shape[:-2] + (L,)), dtype=complex)
    A0 = A[..., 0]
    for k in range(L):
        rhs = B[..., k].astype(complex)
        for l in range(1, k + 1):
            rhs -= np.einsum("...ij,...j->...i", A[..., l], X[..., k - l])
        X[..., k] = np.linalg.solve(A0, rhs[..., None])[..., 0]
    return X
