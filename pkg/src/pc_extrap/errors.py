"""Exception hierarchy shared by all pc_extrap modules."""


class PCExtrapError(Exception):
    """Base class for every error raised by the package."""


class GridMismatchError(PCExtrapError, ValueError):
    """A step, period or time point is not aligned with the sampling grid."""


class InsufficientHistoryError(PCExtrapError, ValueError):
    """A path does not reach far enough into the past for the requested operation."""


class DomainError(PCExtrapError, ValueError):
    """An argument lies outside the domain of a formula."""


class EmptyInputError(PCExtrapError, ValueError):
    pass


class DimensionError(PCExtrapError, ValueError):
    pass


class NearSingularDensityError(PCExtrapError, ValueError):
    """A spectral density matrix is (numerically) singular at a quadrature node."""

    def __init__(self, message, node=None, lam=None):
        super().__init__(message)
        self.node = node
        self.lam = lam


class PreconditionError(PCExtrapError, ValueError):
    pass


class IllConditionedOperatorError(PCExtrapError, ValueError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class InconsistencyError(PCExtrapError, ArithmeticError):
    """A computed quantity violates a sign or reality constraint."""


class ConfigError(PCExtrapError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
