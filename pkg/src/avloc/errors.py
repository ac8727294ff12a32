"""Exception types shared across the package."""


class AvlocError(Exception):
    """Base class for every package-specific error."""


class ShapeError(AvlocError):
    """Operands have incompatible or malformed shapes."""


class ConfigError(AvlocError):
    """A configuration value is outside the supported set."""


class ContractError(AvlocError):
    """An operation was invoked outside its contract."""


class FormatError(AvlocError):
    """A binary file's structure cannot be parsed."""


class ConsistencyError(AvlocError):
    """Parsed data disagrees with the dimensions something else declared."""


class DataError(AvlocError):
    """A numeric payload violates a data invariant (e.g. non-finite values)."""


class LabelError(AvlocError):
    """A label lies outside the declared class range."""


class TrainingDiverged(AvlocError):
    """Training produced a non-finite loss."""
