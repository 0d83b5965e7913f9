"""Exception types shared across the package."""


class StochEulerError(Exception):
    """Base class for all package errors."""


class GridMismatchError(StochEulerError, ValueError):
    """Two fields (or a field and a sample array) live on different grids."""


class BlowUpError(StochEulerError, RuntimeError):
    """Non-finite values appeared in the discrete solution.

    ``time`` is the model time of the step that produced them.
    """

    def __init__(self, message, time=None, diagnostics=None):
        super().__init__(message)
        self.time = time
        self.diagnostics = diagnostics if diagnostics is not None else []


class ConfigError(StochEulerError, ValueError):
    """Invalid or incomplete run configuration."""


class SnapshotFormatError(StochEulerError, ValueError):
    """A binary snapshot file is malformed or does not match expectations."""
