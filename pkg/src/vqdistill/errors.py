"""Exception types shared across the toolkit."""


class VqDistillError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(VqDistillError, ValueError):
    """An argument violates a precondition (empty dataset, bad lengths, ...)."""


class DimensionMismatchError(VqDistillError, ValueError):
    """A vector's dimension does not match the declared dimension."""


class InsufficientPointsError(VqDistillError, ValueError):
    """Fewer distinct points than requested clusters."""


class FormatError(VqDistillError, ValueError):
    """A file does not conform to its schema. Carries the offending field path."""

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class InvalidStateError(VqDistillError, RuntimeError):
    """An operation was attempted in a state that forbids it (e.g. step after terminal)."""


class UnsupportedOperationError(VqDistillError, RuntimeError):
    """The target object does not support the requested operation."""
