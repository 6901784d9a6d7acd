"""Shared exception types, mapped to CLI exit codes in retcite.cli."""


class RetciteError(Exception):
    """Base class for all errors raised by this package."""


class MalformedInputError(RetciteError):
    """An input file or value does not satisfy its documented format."""


class TransientServiceError(RetciteError):
    """A remote service kept failing after the configured retries."""

    def __init__(self, message: str, retries: int):
        super().__init__(message)
        self.retries = retries


class PlacementError(RetciteError):
    """A citing year cannot be placed in any period of its timeline."""


class AnnotationError(RetciteError):
    """A pointer occurrence cannot be resolved inside its document."""


class StageOrderError(RetciteError):
    """A pipeline command was invoked before its prerequisites ran."""
