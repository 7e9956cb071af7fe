"""Exception types shared across the package."""


class PlatelabError(Exception):
    """Base class for all package-specific errors."""


class GraphFormatError(PlatelabError):
    """Raised when a lattice graph document is malformed."""


class GraphValidationError(PlatelabError):
    """Raised when an operation requires a valid graph but got an invalid one.

    Attributes
    ----------
    violations : list of str
        The rules the graph broke, one entry per failed check.
    """

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations) if violations is not None else []


class DegenerateGeometryError(PlatelabError):
    """Raised when beam geometry collapses (coincident endpoints, zero extent)."""


class MeshRejectedError(PlatelabError):
    """Raised when a voxelized lattice does not percolate between the clamp
    and grip faces after fragment removal."""


class ChainLockingError(PlatelabError):
    """Raised when the effective chain stretch reaches the locking stretch."""


class DivergedSolve(PlatelabError):
    """Raised when a Newton solve fails to converge after boundary-condition
    bisection is exhausted.

    Attributes
    ----------
    residual : float or None
        Last residual norm seen before giving up.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SessionBusy(PlatelabError):
    """Raised when a second step is requested while one is already running."""
