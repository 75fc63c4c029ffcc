"""Exception types raised across the package."""


class DroneCFError(Exception):
    """Base class for all package errors."""


class InvalidRecordError(DroneCFError, ValueError):
    pass


class IncompatiblePortsError(DroneCFError, ValueError):
    pass


class TrajectoryMismatchError(DroneCFError, ValueError):
    pass


class InvalidDatasetError(DroneCFError, ValueError):
    pass


class GeometryError(DroneCFError, ValueError):
    pass


class InvalidPlanError(DroneCFError, ValueError):
    pass


class OutOfBoundsError(DroneCFError, ValueError):
    pass


class DuplicateKeyError(DroneCFError, ValueError):
    pass


class InvalidInputError(DroneCFError, ValueError):
    pass


class DegenerateChannelError(DroneCFError, ValueError):
    pass


class InvalidCombinerError(DroneCFError, ValueError):
    pass


class InfeasibleSubsetError(DroneCFError, ValueError):
    pass


class IncompatibleDatasetError(DroneCFError, ValueError):
    pass


class NumericalError(DroneCFError, ArithmeticError):
    pass


class DatasetFormatError(DroneCFError, ValueError):
    """Malformed dataset file. Carries the 1-based line number and field name."""

    def __init__(self, line, field, message):
        self.line = line
        self.field = field
        loc = f"line {line}" + (f", field {field!r}" if field else "")
        super().__init__(f"{loc}: {message}")


class MappingError(DroneCFError, ValueError):
    pass


class ConfigError(DroneCFError, ValueError):
    pass


class PipelineError(DroneCFError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
