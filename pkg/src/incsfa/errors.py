"""Exception types shared across the package."""


class IncSFAError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(IncSFAError, ValueError):
    """A frame, stream or argument violates an operation's preconditions."""


class ConfigError(IncSFAError, ValueError):
    """Inconsistent or invalid configuration."""


class DataError(IncSFAError, ValueError):
    """Malformed input data (bad rows, dimension mismatch against a model)."""


class FormatError(IncSFAError):
    """A serialized model could not be decoded."""


class ChecksumError(FormatError):
    """Serialized payload does not match its trailing checksum."""


class NotTrainedError(IncSFAError, RuntimeError):
    """Operation requires a unit or network that has seen data."""
