"""Exception hierarchy shared by every module.

``ValidationError`` subclasses signal bad inputs (CLI exit code 1);
``NumericalError`` subclasses signal a computation that could not be carried
out on valid inputs (CLI exit code 2).
"""


class CorrkitError(Exception):
    """Base class for all package errors."""


class ValidationError(CorrkitError, ValueError):
    """Input violates a documented precondition."""


class NumericalError(CorrkitError, ArithmeticError):
    """A numerical routine failed on otherwise valid input."""


class ParseError(ValidationError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class SpacingError(ValidationError):
    """Timestamps are not uniformly spaced."""


class InsufficientDataError(ValidationError):
    pass


class RankabilityError(ValidationError):
    """A criterion row has no ordering to exploit."""


class ParameterError(ValidationError):
    pass


class DegenerateAssetError(ValidationError):
    def __init__(self, asset):
        self.asset = asset
        super().__init__(f"asset {asset!r} has zero sample variance")


class RankError(ValidationError):
    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"factor column {column} is linearly dependent on the others")


class DegeneracyError(ValidationError):
    """Constraint subspace leaves no feasible direction."""


class AlignmentError(ValidationError):
    pass


class DegenerateIndexError(ValidationError):
    pass


class NonStationarySeriesError(ValidationError):
    pass


class PSDError(ValidationError):
    """Matrix is not a valid (positive semi-definite) correlation matrix."""
