"""Exception types shared across the package."""


class FlightPatchError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FlightPatchError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigError(FlightPatchError, ValueError):
    """A configuration value is out of range or inconsistent."""


class UsageError(FlightPatchError, RuntimeError):
    """An API was called in an unsupported way (e.g. backward on a matrix)."""


class DataError(FlightPatchError, ValueError):
    """Input data violates a pipeline contract."""


class SchemaError(DataError):
    """A required CSV column is missing or the file is not parseable."""


class DomainError(FlightPatchError, ValueError):
    """A predicted differential cannot be inverted back to coordinates."""


class TrainingError(FlightPatchError, RuntimeError):
    """Training aborted (non-finite loss, empty dataset, ...)."""


class CheckpointError(FlightPatchError, ValueError):
    """A checkpoint or dataset file is corrupt, tampered or incompatible."""
