"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line driver:
2 for numerical validation failures, 3 for usage errors and 4 for
capacity or box-size problems.
"""


class FacetLabError(Exception):
    exit_code = 2


class UsageError(FacetLabError, ValueError):
    exit_code = 3


class ZeroVector(UsageError):
    """All entries of a slope vector are zero."""


class OutOfBox(FacetLabError, IndexError):
    exit_code = 3


class NonOrthogonal(UsageError):
    pass


class IrrationalZeta(UsageError):
    pass


class CapacityExceeded(FacetLabError):
    exit_code = 4


class BoxTooSmall(FacetLabError):
    """The positive set reached the frame of the working box."""

    exit_code = 4


class RootPairingFailed(FacetLabError):
    pass


class NonRealProduct(FacetLabError):
    pass


class NoConvergence(FacetLabError):
    pass


class ToleranceUnreachable(FacetLabError):
    pass


class SingularSystem(FacetLabError):
    pass


class IterationCap(FacetLabError):
    pass


class NonMonotoneActiveSet(FacetLabError):
    pass


class EmptySupport(FacetLabError):
    pass
