"""Input checks shared by the estimator and the command line."""

from __future__ import annotations

import numbers
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .problem import ProblemSpec, load_problem, parse_problem


def check_problem(problem) -> ProblemSpec:
    """Accept a :class:`ProblemSpec`, a path to a problem file, or INI text."""
    if isinstance(problem, ProblemSpec):
        return problem
    if isinstance(problem, Path):
        return load_problem(problem)
    if isinstance(problem, str):
        if "[" in problem and "\n" in problem:
            return parse_problem(problem)
        return load_problem(problem)
    raise ValidationError(f"cannot interpret {type(problem).__name__} as a problem")


def check_positive(name: str, value, integer: bool = False, allow_none: bool = False):
    if value is None and allow_none:
        return None
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind) or not value > 0:
        raise ValidationError(f"{name} must be a positive {'integer' if integer else 'number'}, "
                              f"got {value!r}")
    return value


def check_points(X) -> np.ndarray:
    """Evaluation points as a complex array of shape (n_samples, 2): columns x and ħ."""
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1 and X.shape[0] == 2:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValidationError(f"expected points of shape (n_samples, 2) [x, hbar], got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("evaluation points must be finite")
    if np.any(X[:, 1] == 0):
        raise ValidationError("ħ = 0 is not a resummation point (use the formal coefficients)")
    return X


def parse_complex_list(text: str) -> list:
    """``"0.05, 0.1, 0.1+0.02j"`` -> list of complex numbers."""
    out = []
    for item in text.split(","):
        item = item.strip().replace(" ", "")
        if not item:
            continue
        try:
            out.append(complex(item.replace("i", "j")))
        except ValueError:
            raise ValidationError(f"bad complex number {item!r}") from None
    if not out:
        raise ValidationError("empty number list")
    return out
