"""Exception hierarchy.

Two families matter to callers (and to the CLI exit codes): validation
problems with the inputs, and numerical failures during computation.
"""


class PowerLawError(Exception):
    """Base class for all package errors."""


class ValidationError(PowerLawError, ValueError):
    """Input data or configuration violates a documented precondition."""


class ParseError(ValidationError):
    """A cell of a price file could not be parsed."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class InsufficientDataError(ValidationError):
    pass


class RankDeficiencyError(ValidationError):
    pass


class EmptyPortfolioError(ValidationError):
    """No component has a nonzero weight."""


class UnsupportedFormError(ValidationError):
    pass


class NumericalError(PowerLawError, ArithmeticError):
    """An iterative method failed to produce a usable answer."""


class ConvergenceError(NumericalError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class DegeneratePenaltyError(NumericalError):
    """A component with positive excess return carries zero penalty.

    The objective is then unbounded along that component.
    """

    def __init__(self, message, components=()):
        super().__init__(message)
        self.components = tuple(components)
