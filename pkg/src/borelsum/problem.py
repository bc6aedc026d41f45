"""Problem description: the right-hand side F(x, ħ, y) and its base point.

``F^i(x, ħ, y) = sum_k sum_m F^i_{k m}(x) ħ^k y^m`` with closed-form
coefficient functions.  Problem files are INI-style::

    [system]
    N = 1

    [coefficients]
    # key: component i (1-based), ħ-power k, then y-exponents m1..mN
    1,0,1 = 1
    1,0,0 = -1/x
    1,1,2 = 1

    [basepoint]
    x0 = 1
    y0 = 1            # comma separated for N > 1

    [window]
    a = 1
    b = 2

    [direction]
    theta = 0

Coefficient expressions follow the grammar in :mod:`borelsum.expr`.
Absent table entries are the zero function.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Tuple

import numpy as np

from .exceptions import ValidationError
from .expr import CoefficientFunction
from .series import MultiIndex

CoeffKey = Tuple[int, int, MultiIndex]   # (component i, ħ-power k, y-multi-index m)


def _parse_complex(text: str) -> complex:
    s = text.strip().replace(" ", "").replace("i", "j")
    try:
        return complex(s)
    except ValueError:
        from .expr import parse_expression
        node = parse_expression(text)
        if not node.is_const():
            raise ValidationError(f"expected a constant, got {text!r}")
        return complex(node.value)


@dataclass(frozen=True)
class ProblemSpec:
    """The system ``ħ ∂_x f = F(x, ħ, f)`` plus base point, window and direction.

    ``coeffs`` maps ``(i, k, m)`` with 0-based component ``i`` to a
    :class:`CoefficientFunction`.
    """

    N: int
    coeffs: Mapping[CoeffKey, CoefficientFunction]
    x0: complex
    y0: np.ndarray
    window: Tuple[complex, complex]
    theta: float = 0.0
    name: str = "problem"

    def __post_init__(self):
        if self.N < 1:
            raise ValidationError("N must be >= 1")
        y0 = np.atleast_1d(np.asarray(self.y0, dtype=complex))
        if y0.shape != (self.N,):
            raise ValidationError(f"y0 must have {self.N} entries, got {y0.shape[0]}")
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "x0", complex(self.x0))
        object.__setattr__(self, "window", (complex(self.window[0]), complex(self.window[1])))
        cleaned = {}
        for (i, k, m), fn in self.coeffs.items():
            m = tuple(int(v) for v in m)
            if not 0 <= i < self.N:
                raise ValidationError(f"component index {i + 1} outside 1..{self.N}")
            if k < 0 or len(m) != self.N or min(m) < 0:
                raise ValidationError(f"bad coefficient key {(i + 1, k) + m}")
            if not isinstance(fn, CoefficientFunction):
                fn = CoefficientFunction(fn)
            if not fn.is_zero:
                cleaned[(i, int(k), m)] = fn
        object.__setattr__(self, "coeffs", dict(sorted(cleaned.items())))
        if self.window[0] == self.window[1]:
            raise ValidationError("window has zero length")

    @property
    def K(self) -> int:
        """ħ-degree of F."""
        return max((k for (_, k, _) in self.coeffs), default=0)

    @property
    def y_degree(self) -> int:
        return max((sum(m) for (_, _, m) in self.coeffs), default=0)

    def terms(self, k: int | None = None):
        for (i, kk, m), fn in self.coeffs.items():
            if k is None or kk == k:
                yield i, kk, m, fn

    def window_contains(self, x, tol: float = 1e-12) -> bool:
        a, b = self.window
        t = (complex(x) - a) / (b - a)
        return abs(t.imag) <= tol and -tol <= t.real <= 1 + tol

    def with_window(self, a, b) -> "ProblemSpec":
        return ProblemSpec(self.N, self.coeffs, self.x0, self.y0, (a, b), self.theta, self.name)

    def to_ini(self) -> str:
        lines = ["[system]", f"N = {self.N}", "", "[coefficients]"]
        for (i, k, m), fn in self.coeffs.items():
            key = ",".join(str(v) for v in (i + 1, k) + m)
            lines.append(f"{key} = {fn.source}")
        fmt = lambda z: repr(float(z.real)) if z.imag == 0 else \
            f"{float(z.real)!r}{'+' if z.imag >= 0 else '-'}{abs(float(z.imag))!r}j"
        lines += ["", "[basepoint]", f"x0 = {fmt(self.x0)}",
                  "y0 = " + ", ".join(fmt(complex(v)) for v in self.y0),
                  "", "[window]", f"a = {fmt(self.window[0])}", f"b = {fmt(self.window[1])}",
                  "", "[direction]", f"theta = {self.theta!r}", ""]
        return "\n".join(lines)


def parse_problem(text: str, name: str = "problem") -> ProblemSpec:
    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed problem file: {exc}") from exc
    for section in ("system", "coefficients", "basepoint", "window"):
        if not cp.has_section(section):
            raise ValidationError(f"missing section [{section}]")
    try:
        N = int(cp.get("system", "N"))
    except (configparser.Error, ValueError) as exc:
        raise ValidationError(f"[system] N: {exc}") from exc
    coeffs: Dict[CoeffKey, CoefficientFunction] = {}
    for key, expr in cp.items("coefficients"):
        try:
            parts = [int(p) for p in key.split(",")]
        except ValueError:
            raise ValidationError(f"bad coefficient key {key!r}") from None
        if len(parts) != N + 2:
            raise ValidationError(f"coefficient key {key!r} needs {N + 2} integers (i,k,m1..mN)")
        i, k, m = parts[0] - 1, parts[1], tuple(parts[2:])
        if (i, k, m) in coeffs:
            raise ValidationError(f"duplicate coefficient key {key!r}")
        coeffs[(i, k, m)] = CoefficientFunction(expr)
    x0 = _parse_complex(cp.get("basepoint", "x0"))
    y0 = [_parse_complex(v) for v in cp.get("basepoint", "y0").split(",")]
    window = (_parse_complex(cp.get("window", "a")), _parse_complex(cp.get("window", "b")))
    theta = float(cp.get("direction", "theta", fallback="0"))
    if "K" in cp["system"]:
        declared = int(cp.get("system", "K"))
        actual = max((k for (_, k, _) in coeffs), default=0)
        if actual > declared:
            raise ValidationError(f"coefficient with ħ-power {actual} exceeds declared K = {declared}")
    spec = ProblemSpec(N, coeffs, x0, np.array(y0), window, theta, name)
    if not spec.window_contains(spec.x0):
        raise ValidationError(f"base point x0 = {spec.x0} is not on the window segment")
    return spec


def load_problem(path) -> ProblemSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read problem file {path}: {exc}") from exc
    return parse_problem(text, name=path.stem)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _monomial(y, m):
    out = 1.0
    for yj, mj in zip(y, m):
        if mj:
            out = out * yj ** mj
    return out


def eval_F(spec: ProblemSpec, x, hbar, y) -> np.ndarray:
    """``F(x, ħ, y)`` as a length-N complex vector.

    Raises :class:`ValidationError` when a coefficient function is not
    finite at ``x`` (a pole).
    """
    y = np.asarray(y, dtype=complex)
    out = np.zeros(spec.N, dtype=complex)
    with np.errstate(all="ignore"):
        for i, k, m, fn in spec.terms():
            try:
                c = fn(x)
            except ZeroDivisionError:
                c = np.inf
            if not np.isfinite(c):
                raise ValidationError(f"coefficient F[{i + 1},{k},{m}] = {fn.source} "
                                      f"has a pole at x = {x}")
            out[i] += c * hbar ** k * _monomial(y, m)
    return out


def eval_F0_jacobian(spec: ProblemSpec, x, y) -> np.ndarray:
    """``∂F_0/∂y`` at ``(x, y)`` from the exact monomial derivative."""
    y = np.asarray(y, dtype=complex)
    J = np.zeros((spec.N, spec.N), dtype=complex)
    with np.errstate(all="ignore"):
        for i, k, m, fn in spec.terms(0):
            c = fn(x)
            if not np.isfinite(c):
                raise ValidationError(f"coefficient F[{i + 1},0,{m}] has a pole at x = {x}")
            for j in range(spec.N):
                if m[j]:
                    mm = list(m)
                    mm[j] -= 1
                    J[i, j] += c * m[j] * _monomial(y, mm)
    return J


@dataclass
class ValidationReport:
    F0_norm: float
    jacobian_min_singular: float
    tol: float
    diagnostics: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.diagnostics

    def summary(self) -> str:
        head = "PASS" if self.passed else "FAIL"
        lines = [f"{head}: |F0(x0,y0)| = {self.F0_norm:.3e}, "
                 f"min singular value of dF0/dy = {self.jacobian_min_singular:.3e} (tol {self.tol:g})"]
        lines += [f"  - {d}" for d in self.diagnostics]
        return "\n".join(lines)


def validate_problem(spec: ProblemSpec, tol: float = 1e-9) -> ValidationReport:
    """Check that ``(x0, y0)`` solves ``F_0 = 0`` with invertible Jacobian."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    try:
        F0 = eval_F(spec, spec.x0, 0.0, spec.y0)
        J = eval_F0_jacobian(spec, spec.x0, spec.y0)
    except ValidationError as exc:
        return ValidationReport(float("nan"), float("nan"), tol,
                                [f"evaluation failure at base point: {exc}"])
    f0n = float(np.linalg.norm(F0))
    smin = float(np.linalg.svd(J, compute_uv=False).min())
    diags = []
    if not f0n <= tol:
        diags.append(f"base point is not a root of F0: |F0(x0,y0)| = {f0n:.3e} > tol")
    if not smin >= tol:
        diags.append("Jacobian below tolerance: dF0/dy is not invertible at the base point "
                     "(leading-order Jacobian invertibility hypothesis violated)")
    return ValidationReport(f0n, smin, tol, diags)
