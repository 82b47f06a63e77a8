"""Exception types shared across the toolkit."""


class HQNNError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(HQNNError, ValueError):
    """A tensor shape does not fit the operation."""


class ValidationError(HQNNError, ValueError):
    """An argument value is outside its allowed domain."""


class ContractError(HQNNError, RuntimeError):
    """An operation was invoked in a state that violates its preconditions."""


class FormatError(HQNNError, ValueError):
    """A file on disk does not follow the expected format."""
