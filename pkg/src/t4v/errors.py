"""Exception taxonomy shared by all modules.

The CLI maps these onto exit codes: usage problems exit 1, data/format
problems exit 2, numeric failures exit 3.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class UsageError(ToolkitError):
    """Caller passed arguments that can never be valid (exit 1)."""


class DimensionError(UsageError):
    """Incompatible or impossible array dimensions."""


class DataError(ToolkitError):
    """Input data violates a contract (exit 2)."""


class FormatError(DataError):
    """A file failed magic/version/CRC validation."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ManifestError(DataError):
    """Dataset manifest inconsistent with the files it references."""


class InsufficientDataError(DataError):
    """A class has too few samples for the requested operation."""


class DegenerateRowError(DataError):
    """A zero-norm row where a direction is required."""


class NormalizationError(DataError):
    """Embeddings expected to be unit-norm are not."""


class SpecError(DataError):
    """A synthetic-dataset spec is infeasible."""


class AlignmentError(DataError):
    """Inputs that must share an axis do not."""


class SamplerError(DataError):
    """Stratified sampling left a class empty."""


class LabelError(DataError):
    """A label index is out of range for the class list."""


class NumericError(ToolkitError):
    """Numeric failure (exit 3)."""


class RankError(NumericError):
    """Numerically rank-deficient input."""


class NotPositiveDefiniteError(NumericError):
    """Matrix required to be SPD is not."""


class NanAbortError(NumericError):
    """A NaN/Inf appeared where finiteness is required."""
