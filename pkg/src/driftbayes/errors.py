"""Exception types raised across the package."""


class DriftBayesError(Exception):
    """Base class for all package errors."""


class SimulationDiverged(DriftBayesError):
    """The Euler recursion produced a non-finite state or drift value."""

    def __init__(self, step, value=None):
        self.step = step
        self.value = value
        super().__init__(f"simulation diverged at step {step} (value={value!r})")


class DomainError(DriftBayesError, ValueError):
    """A function was evaluated outside the region where it is valid."""


class UnsupportedFamily(DriftBayesError, TypeError):
    """The basis family lacks a capability required by the operation."""


class ConditioningError(DriftBayesError, ArithmeticError):
    """A precision matrix could not be factorized."""

    def __init__(self, message, min_eigenvalue=None):
        self.min_eigenvalue = min_eigenvalue
        if min_eigenvalue is not None:
            message = f"{message} (smallest eigenvalue {min_eigenvalue:.3e})"
        super().__init__(message)


class QuadratureError(DriftBayesError, ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(f"{message}: {self.diagnostics}")


class DiagnosticsError(DriftBayesError, ValueError):
    """A trace is too short or malformed for the requested diagnostic."""


class ConfigError(DriftBayesError, ValueError):
    """A run configuration failed validation."""
