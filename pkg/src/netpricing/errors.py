"""Exception hierarchy.

Configuration problems derive from ``ConfigError`` (CLI exit code 2);
everything numerical derives from ``NumericalError`` (exit code 3).
"""


class NetPricingError(Exception):
    pass


class ConfigError(NetPricingError, ValueError):
    pass


class SpecError(ConfigError):
    """Malformed topology or utility descriptor."""


class DimensionError(ConfigError):
    pass


class ShapeError(ConfigError):
    """Matrix structure does not satisfy an operation's precondition."""


class StructureError(ConfigError):
    pass


class PreconditionError(ConfigError):
    pass


class NumericalError(NetPricingError, ArithmeticError):
    pass


class DomainError(NumericalError, ValueError):
    pass


class BoundaryError(DomainError):
    pass


class RangeError(NumericalError, ValueError):
    pass


class DegenerateError(NumericalError):
    pass


class SpectralError(NumericalError):
    pass


class MarginError(NumericalError):
    pass


class StabilityError(NumericalError):
    pass


class SingularError(NumericalError):
    pass


class BracketError(NumericalError):
    pass


class ConditionError(NumericalError):
    """Neither uniqueness condition certifies the equilibrium."""


class NoConvergence(NumericalError):
    def __init__(self, message, last=None, iterations=None):
        super().__init__(message)
        self.last = last
        self.iterations = iterations


class BudgetExhausted(NumericalError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class EmptyInput(NumericalError, ValueError):
    pass


class InsufficientData(NumericalError):
    pass


class InsufficientPoints(NumericalError):
    pass
