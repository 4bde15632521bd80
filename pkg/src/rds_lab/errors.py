"""Exception hierarchy. Everything raised on purpose derives from RdsLabError."""


class RdsLabError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(RdsLabError, ValueError):
    """A numeric parameter is outside its valid range."""


class GridError(RdsLabError, ValueError):
    """A time grid is invalid or two grids that must match do not."""


class PathIndexError(RdsLabError, IndexError):
    """A grid index is out of range for the stored path."""


class KindError(RdsLabError, TypeError):
    """A channel has the wrong kind for the requested operation."""


class ConfigurationError(RdsLabError, ValueError):
    """Unknown system/scenario name, or missing/invalid configuration keys."""


class StateError(RdsLabError, RuntimeError):
    """Required auxiliary state (e.g. an attached OU path) is missing."""


class BlowUpError(RdsLabError, ArithmeticError):
    """Integration produced a non-finite state.

    Attributes:
        step: first grid index at which a non-finite value appeared.
    """

    def __init__(self, step, message=None):
        self.step = int(step)
        super().__init__(message or f"non-finite state first encountered at step {step}")


class DegeneracyError(RdsLabError, ArithmeticError):
    """Tangent frame collapsed (QR diagonal underflow)."""


class AlignmentError(RdsLabError, ValueError):
    """Two grid-indexed objects that must share a grid do not."""


class PreconditionError(RdsLabError, ValueError):
    """A documented precondition was not met (e.g. unverified growth constant)."""


class BudgetError(RdsLabError, ValueError):
    """A mesh or replica budget would be exceeded."""


class LengthError(RdsLabError, ValueError):
    """A series is too short for the requested statistic."""
