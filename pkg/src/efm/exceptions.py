"""Exception types raised by the estimation routines."""


class EFMError(Exception):
    """Base class for all package errors."""


class DomainError(EFMError, ValueError):
    """Argument outside the domain of a link family or numeric routine."""


class InsufficientLocalData(EFMError):
    """Fewer than two distinct index values fall inside a kernel window."""

    def __init__(self, message, points=None):
        super().__init__(message)
        self.points = points


class NoLocalConvergence(EFMError):
    """Damped Newton failed to solve the local quasi-score equations."""


class BoundaryError(EFMError, ValueError):
    """Index vector sits on the boundary beta_1 <= 0 of the parameter space."""


class BadDamping(EFMError):
    """The damping denominator of the fixed-point update vanished."""


class NoFeasibleBandwidth(EFMError):
    """Every bandwidth on the grid failed cross-validation."""


class NoFeasibleDamping(EFMError):
    """Every damping constant on the grid failed cross-validation."""


class TestFailure(EFMError):
    """A quasi-likelihood ratio test could not be completed."""

    __test__ = False  # keep pytest from collecting this class

    def __init__(self, message, full_fit=None, restricted_fit=None):
        super().__init__(message)
        self.full_fit = full_fit
        self.restricted_fit = restricted_fit
