"""
Exception hierarchy for pertubox.
"""


class PertuboxError(ValueError):
    """Base class for every error raised by the library."""
    pass


class SchemaError(PertuboxError):
    """Raised when a schema document is malformed."""
    pass


class DataFormatError(PertuboxError):
    """Raised when a CSV file cannot be read into a Dataset."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class DatasetError(PertuboxError):
    """Raised when a Dataset would violate its invariants."""
    pass


class NotNumericError(PertuboxError):
    """Raised when a numeric-only technique receives non-numeric columns."""
    pass


class ParameterError(PertuboxError):
    """Raised when a technique parameter is out of range."""
    pass


class DegenerateInputError(PertuboxError):
    """Raised when input data carries no usable information."""
    pass


class NonIdentifiableError(PertuboxError):
    """Raised when a randomized response model cannot be inverted."""
    pass


class HierarchyError(PertuboxError):
    """Raised when a generalization hierarchy is malformed."""
    pass


class AnonymizationError(PertuboxError):
    """Raised when a table cannot be anonymized as requested."""
    pass


class InfeasibleError(AnonymizationError):
    """Raised when k cannot be reached within the suppression budget."""
    pass


class UnknownTechniqueError(PertuboxError):
    """Raised for a technique id missing from the registry."""
    pass


class ConfigError(PertuboxError):
    """Raised for invalid run configuration (a usage error)."""
    pass
