"""Exception types raised by the recursion toolkit."""


class LaceRecError(Exception):
    """Base class for all toolkit errors."""


class InvalidParameterError(LaceRecError, ValueError):
    pass


class SymmetryError(InvalidParameterError):
    """A table violates the reflection/permutation symmetry.

    ``pair`` holds the two lattice points whose weights differ.
    """

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class TruncationError(LaceRecError):
    """The model does not provide coefficients up to the requested order."""

    def __init__(self, message, n=None):
        super().__init__(message)
        self.n = n


class NoConvergenceError(LaceRecError):
    pass


class RatioBreakdownError(LaceRecError, ZeroDivisionError):
    def __init__(self, message, n=None):
        super().__init__(message)
        self.n = n


class DegenerateModelError(LaceRecError):
    pass


class BracketError(LaceRecError, ValueError):
    pass


class OutOfDomainError(LaceRecError, ValueError):
    pass


class IncompleteTraceError(LaceRecError):
    pass
