"""Exception types raised across the package."""


class IeegPainError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(IeegPainError, ValueError):
    """An argument violates an operation's preconditions."""


class DegenerateFitError(IeegPainError, ValueError):
    """A model cannot be fitted, e.g. only one class is present."""


class EmptyDatasetError(IeegPainError, ValueError):
    """Every trial was excluded by the labeling strategy."""


class ProtocolError(IeegPainError, RuntimeError):
    """The cross-validation protocol cannot proceed (or detected leakage)."""


class ConfigError(IeegPainError, ValueError):
    """A configuration is malformed or physically impossible."""


class UnsupportedOperationError(IeegPainError, TypeError):
    """The operation is not defined for this model kind."""


class EmptyNetworkError(IeegPainError, ValueError):
    """No MSC pair features were available to build a network."""


class SchemaError(IeegPainError, ValueError):
    """A persisted document has an unknown or incompatible schema version."""


class DataFormatError(IeegPainError, ValueError):
    """An input file exists but does not parse as the expected format."""


class InputFileError(IeegPainError, OSError):
    """An input or output path could not be opened; the message names it."""


class StageError(IeegPainError, RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
