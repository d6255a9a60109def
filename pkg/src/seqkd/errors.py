"""Exception types shared across the toolkit."""


class SeqkdError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SeqkdError):
    """Invalid configuration value or argument combination."""


class DataError(SeqkdError):
    """Malformed, mismatched, or otherwise unusable input data."""


class CheckpointError(DataError):
    """Corrupt, truncated, or incompatible checkpoint file."""


class NumericsError(SeqkdError):
    """A tensor went non-finite during training."""
