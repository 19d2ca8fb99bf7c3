"""
Exception hierarchy for COLUMN PCG.
"""


class ColumnSolverError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgumentError(ColumnSolverError, ValueError):
    """Bad sizes, mismatched fields or out-of-range parameters."""


class GridIndexError(ColumnSolverError, IndexError):
    """An (i, j, k) triple outside the grid."""


class BreakdownError(ColumnSolverError, ArithmeticError):
    """Zero pivot in a tridiagonal sweep or loss of positive definiteness."""


class OracleTooLargeError(InvalidArgumentError):
    """Dense assembly requested for a grid that is too large."""
