"""Exception types raised across the package."""


class GradCodeError(Exception):
    """Base class for all package errors."""


class InvalidPlacement(GradCodeError, ValueError):
    pass


class InvalidArgs(GradCodeError, ValueError):
    pass


class Infeasible(GradCodeError):
    """Replication is too low for the requested straggler/adversary budget."""

    def __init__(self, message, limiting_partition=None):
        super().__init__(message)
        self.limiting_partition = limiting_partition


class NoPlan(GradCodeError):
    pass


class GridCollision(GradCodeError):
    pass


class NonLocalAccess(GradCodeError):
    """An encoder was handed gradients of a partition its worker does not hold."""


class InsufficientShares(GradCodeError):
    pass


class DuplicateNode(GradCodeError):
    pass


class TooManyErrors(GradCodeError):
    pass


class FloatModeUnsupported(GradCodeError):
    pass


class NotSquare(GradCodeError, ValueError):
    pass


class TooFewShares(GradCodeError):
    pass


class OutOfRegime(GradCodeError):
    pass


class ConfigMismatch(GradCodeError):
    pass


class DimensionMismatch(GradCodeError, ValueError):
    pass


class DecodeFailure(GradCodeError):
    def __init__(self, message, iteration=None, cause=None):
        super().__init__(message)
        self.iteration = iteration
        self.cause = cause


class NotApplicable(GradCodeError):
    pass


class SingularMatrix(GradCodeError):
    pass
