"""Exception hierarchy shared by every module of the package."""


class MALBRError(Exception):
    """Base class for all errors raised by malbr."""


class InvalidVector(MALBRError, ValueError):
    pass


class NoDecomposition(MALBRError, ValueError):
    pass


class NotPositiveDefinite(MALBRError, ValueError):
    pass


class ReductionDiverged(MALBRError, RuntimeError):
    pass


class EmptyStencil(MALBRError, ValueError):
    pass


class DomainTooSmall(MALBRError, ValueError):
    pass


class InvalidStencilConfig(MALBRError, ValueError):
    pass


class InvalidStencil(MALBRError, ValueError):
    pass


class DomainError(MALBRError, ValueError):
    """Negative argument passed to a function defined on the nonnegative orthant."""


class InitializationFailed(MALBRError, RuntimeError):
    pass


class LinearSolveFailed(MALBRError, RuntimeError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class StallDetected(MALBRError, RuntimeError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class InvalidProblem(MALBRError, ValueError):
    pass


class UnknownCase(MALBRError, KeyError):
    pass


class ConfigError(MALBRError, ValueError):
    pass
