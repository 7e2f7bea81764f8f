"""Exception types shared across the package.

The split mirrors the CLI exit codes: bad or malformed inputs raise
ValidationError (exit 1), computations that fail on structurally valid
inputs raise NumericalError (exit 2), and file-system problems surface
as plain OSError (exit 3).
"""


class RegionCutError(Exception):
    """Base class for all package errors."""


class ValidationError(RegionCutError):
    """Malformed or inconsistent input data."""


class ParseError(ValidationError):
    """Bad file content; carries a line number when one is known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(RegionCutError):
    """A computation failed on structurally valid input."""


class SingularDesignError(NumericalError):
    """Design matrix is rank deficient; names the offending column."""

    def __init__(self, column):
        super().__init__(f"design matrix is singular; column '{column}' "
                         "is linearly dependent on the others")
        self.column = column


class DegenerateLeverageError(NumericalError):
    """A unit has leverage >= 1 and fully determines its own fit."""

    def __init__(self, unit_id):
        super().__init__(f"unit '{unit_id}' has leverage >= 1; its deletion "
                         "diagnostic is undefined")
        self.unit_id = unit_id


class DegenerateSimilarityError(NumericalError):
    """All deviations identical, so the similarity kernel is undefined."""


class DegeneratePartitionError(NumericalError):
    """A region has zero volume under the similarity graph."""


class ConstantInputError(NumericalError):
    """Statistic undefined on a zero-variance input vector."""
