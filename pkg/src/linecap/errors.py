"""Exception hierarchy shared by all modules."""


class LinecapError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(LinecapError, ValueError):
    pass


class DimensionError(LinecapError, ValueError):
    pass


class DomainError(LinecapError, ValueError):
    pass


class ResourceLimitError(LinecapError):
    """Raised when an exact computation would exceed its size budget."""

    def __init__(self, message, required=None, limit=None):
        super().__init__(message)
        self.required = required
        self.limit = limit


class NotApplicableError(LinecapError):
    pass


class DegenerateChannelError(LinecapError):
    pass


class RankError(LinecapError):
    pass


class NotReducibleError(LinecapError):
    """The requested noise level is outside the constructible range.

    ``best`` carries the largest parameter the construction can reach.
    """

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


class ConvergenceError(LinecapError):
    pass
