"""Exception hierarchy shared across the package.

Input and usage problems derive from :class:`InputError`; failures of a
numeric precondition (rank, scale, positive definiteness) derive from
:class:`NumericError`. The CLI maps these to exit codes 2 and 3.
"""

from __future__ import annotations


class TwqrError(Exception):
    """Base class for all package errors."""


class InputError(TwqrError):
    """Malformed input data, files, or parameters."""


class NumericError(TwqrError):
    """A numeric precondition failed (rank, scale, definiteness)."""


# --- data ingestion ---

class MissingColumn(InputError):
    def __init__(self, column: str):
        super().__init__(f"required column {column!r} not found in header")
        self.column = column


class ParseFailure(InputError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(
            f"could not parse value {value!r} in column {column!r} at data row {row}"
        )
        self.row = row
        self.column = column
        self.value = value


class DuplicateCell(InputError):
    def __init__(self, g, h):
        super().__init__(f"cell ({g!r}, {h!r}) appears more than once")
        self.g = g
        self.h = h


class EmptyFile(InputError):
    pass


# --- fitting and variance estimation ---

class InvalidTau(InputError):
    def __init__(self, tau: float):
        super().__init__(f"tau must lie strictly in (0, 1), got {tau}")
        self.tau = tau


class DimensionMismatch(InputError):
    pass


class InvalidConfig(InputError):
    """A simulation or request configuration violates its invariants."""


class RankDeficient(NumericError):
    pass


class DegenerateScale(NumericError):
    pass


class DegenerateDesign(NumericError):
    pass


class NonpositiveBandwidth(NumericError):
    pass


class ZeroBias(NumericError):
    pass


class NonFinite(NumericError):
    pass


class TooFewClusters(NumericError):
    pass


class SingularJacobian(NumericError):
    pass


class ZeroStdError(NumericError):
    pass


class ExcessiveFailureRate(NumericError):
    """More than the tolerated share of Monte Carlo replications failed."""
