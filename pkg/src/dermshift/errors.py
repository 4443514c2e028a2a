"""Exception hierarchy shared by all dermshift modules.

Catalog/file problems inherit from DataError so the CLI can map them to
exit code 2; network problems map to exit code 3.
"""

from __future__ import annotations


class DermshiftError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(DermshiftError):
    """Bad pipeline configuration or CLI usage (exit code 1)."""


class DataError(DermshiftError):
    """Invalid input data (exit code 2)."""


class MalformedCsv(DataError):
    def __init__(self, message: str, row_index: int | None = None):
        super().__init__(message if row_index is None else f"row {row_index}: {message}")
        self.row_index = row_index


class MissingRequiredColumn(DataError):
    def __init__(self, columns):
        super().__init__(f"missing required column(s): {', '.join(sorted(columns))}")
        self.columns = tuple(sorted(columns))


class DuplicateImageId(DataError):
    def __init__(self, image_ids):
        super().__init__(f"duplicate image_id(s): {', '.join(sorted(image_ids))}")
        self.image_ids = tuple(sorted(image_ids))


class UnknownOrigin(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class EmptyInput(DataError):
    pass


class EmptyClass(DataError):
    pass


class DegenerateImage(DataError):
    pass


class NotADistribution(DataError):
    pass


class ZeroVector(DataError):
    pass


class DimMismatch(DataError):
    pass


class RaggedRows(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class DuplicateId(DataError):
    pass


class DegenerateDistances(DataError):
    pass


class InfeasiblePerplexity(DataError):
    pass


class SingleClass(DataError):
    pass


class ZeroVariance(DataError):
    pass


class LengthMismatch(DataError):
    pass


class NetworkError(DermshiftError):
    """Archive fetch failed after retries (exit code 3)."""


class SchemaDrift(DataError):
    """Archive record is missing a field the catalog mapping requires."""
