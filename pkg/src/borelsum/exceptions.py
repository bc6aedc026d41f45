"""Error types.  Each carries the process exit status the CLI maps it to."""


class BorelsumError(Exception):
    exit_code = 2


class ValidationError(BorelsumError, ValueError):
    """Input problem violates a hypothesis (bad file, pole, singular Jacobian)."""

    exit_code = 1


class TurningPointError(ValidationError):
    """The leading-order Jacobian degenerates somewhere on the window."""


class EigenvalueCollision(ValidationError):
    """Two eigenvalue branches of the leading-order Jacobian come too close."""


class ConvergenceError(BorelsumError, RuntimeError):
    """A numerical iteration failed to converge."""

    exit_code = 2


class OutsideDiscError(ConvergenceError):
    """A requested ħ lies outside the certified Borel disc."""


class OutsideWindowError(ConvergenceError):
    """A requested x lies outside the realized resummation window."""


class OracleDisagreement(BorelsumError, AssertionError):
    """Two independent computations that must agree do not."""

    exit_code = 3
