"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems exit 2, capacity
problems exit 3 and numerical failures exit 4.
"""


class PamfkError(Exception):
    """Base class for all package errors."""


class ValidationError(PamfkError, ValueError):
    """Invalid parameters, configuration or arguments."""


class WindowError(ValidationError):
    """A noise window does not cover the cells a computation needs."""


class CapacityError(PamfkError):
    """A request exceeds a hard computational budget."""


class NumericalError(PamfkError, ArithmeticError):
    """Factorisation failure, quadrature non-convergence and similar."""
