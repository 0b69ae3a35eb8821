"""Exception types shared across the package.

Every error raised by library code derives from :class:`FlexpcaError` so
callers (and the command line driver) can distinguish modelling problems
from programming mistakes.
"""


class FlexpcaError(Exception):
    """Base class for all errors raised by this package."""


class DataError(FlexpcaError):
    """Invalid observation data: parse failures, duplicates, bad indices."""


class DomainError(FlexpcaError):
    """A value lies outside the support of the requested family."""


class CoverageError(FlexpcaError):
    """Rows or columns carry too few observations for the requested rank.

    Attributes
    ----------
    rows, cols : list of int
        Indices of the deficient rows and columns.
    """

    def __init__(self, message, rows=(), cols=()):
        super().__init__(message)
        self.rows = list(rows)
        self.cols = list(cols)


class SingularDesignError(FlexpcaError):
    """A weighted least squares design matrix is rank deficient."""


class NonConvergenceError(FlexpcaError):
    """Iterative fitting diverged or exhausted its iteration budget.

    The last iterate is attached as ``last_fit`` when available so callers
    can inspect the state at failure.
    """

    def __init__(self, message, last_fit=None):
        super().__init__(message)
        self.last_fit = last_fit


class SaturatedModelError(FlexpcaError):
    """Residual degrees of freedom are nonpositive; dispersion undefined."""
