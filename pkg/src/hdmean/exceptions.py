"""Exception hierarchy shared by every module of the package."""


class HDMeanError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(HDMeanError, ValueError):
    pass


class NotPSD(HDMeanError, ValueError):
    pass


class Singular(HDMeanError, ValueError):
    pass


class NoConvergence(HDMeanError, RuntimeError):
    pass


class DegenerateNode(HDMeanError, ValueError):
    """A nodewise regression left (numerically) no residual variance."""

    def __init__(self, node, tau_sq):
        self.node = node
        self.tau_sq = tau_sq
        super().__init__(f"node {node}: residual scale tau^2={tau_sq:.3e} is degenerate")


class DimensionMismatch(HDMeanError, ValueError):
    pass


class NonPositiveDiagonal(HDMeanError, ValueError):
    pass


class BadK(HDMeanError, ValueError):
    pass


class BadM(HDMeanError, ValueError):
    pass


class TooLarge(HDMeanError, ValueError):
    """Raised when an exhaustive enumeration exceeds its size guard."""


class BadSpec(HDMeanError, ValueError):
    pass
