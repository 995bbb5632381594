"""Exception hierarchy shared by all modules."""


class PulsefrontError(Exception):
    """Base class for every error raised by this package."""


class MalformedReactionError(PulsefrontError):
    """A reaction evaluator returned non-finite values."""


class NumericalFailure(PulsefrontError):
    """An iterative solver did not converge.

    ``residual`` carries the last residual norm (or the residual history for
    Newton solves) so callers can report it.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnboundedSearchError(PulsefrontError):
    pass


class BlowupError(PulsefrontError):
    def __init__(self, message, t):
        super().__init__(f"{message} (t={t:.6g})")
        self.t = t


class WindowOverflowError(PulsefrontError):
    pass


class InsufficientDataError(PulsefrontError):
    pass


class NotAFrontError(PulsefrontError):
    pass


class DegenerateCoordinatesError(PulsefrontError):
    pass


class OutOfRangeError(PulsefrontError):
    pass


class NoInterfaceError(PulsefrontError):
    pass


class MultiInterfaceError(PulsefrontError):
    pass


class PrematureExtractionError(PulsefrontError):
    pass


class GluingError(PulsefrontError):
    """The two half-line solutions do not match in slope at the junction."""

    def __init__(self, message, mismatch):
        super().__init__(message)
        self.mismatch = mismatch


class ConsistencyError(PulsefrontError):
    """Two routes that must agree did not."""


class ConfigError(PulsefrontError):
    pass
