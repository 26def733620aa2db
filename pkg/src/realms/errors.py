"""Exception hierarchy shared by every module."""


class RealmsError(Exception):
    """Base class for all errors raised by the package."""


class ContractViolation(RealmsError, ValueError):
    """An input broke a documented precondition (shape, dimension, invariant)."""


class NumericalFailure(RealmsError, ArithmeticError):
    """A numerical routine failed; ``residual`` carries the offending size."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class OverflowFailure(NumericalFailure):
    pass


class NonConvergence(NumericalFailure):
    """Iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, residual=None, iterations=None, multiplier_norm=None):
        super().__init__(message, residual)
        self.iterations = iterations
        self.multiplier_norm = multiplier_norm


class BoundaryTargetError(NonConvergence):
    """Constraint targets sit on (or outside) the edge of the achievable set."""


class DegenerateConstraints(ContractViolation):
    """Constraint operators are linearly dependent modulo the identity."""


class UnsupportedGraining(ContractViolation):
    """A partition of histories cannot be written as a chain of projector sums.

    The summed class operators are still available as ``class_operators``.
    """

    def __init__(self, message, class_operators=None):
        super().__init__(message)
        self.class_operators = class_operators


class TruncationError(NumericalFailure):
    """A wave packet leaked onto the edge of its finite grid."""


class CapExceeded(RealmsError):
    """A requested size is beyond a module's hard dimension cap."""


class ConfigError(RealmsError):
    """Experiment configuration is malformed; ``field`` names the culprit."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
