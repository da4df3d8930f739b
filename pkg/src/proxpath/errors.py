"""Exception hierarchy shared by all modules."""


class ProxPathError(Exception):
    """Base class for all package errors."""


class SchemaError(ProxPathError):
    """A required column or block is missing or has the wrong shape."""


class ParseError(ProxPathError):
    """A data cell could not be parsed or violates a row invariant."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ConfigurationError(ProxPathError):
    """Invalid user-supplied configuration (dimensions, roles, penalties)."""


class EstimationError(ProxPathError):
    """A fitting stage failed; ``stage`` names the failing bridge or step."""

    def __init__(self, message, stage=None, smallest_singular_value=None):
        if stage is not None:
            message = f"[{stage}] {message}"
        super().__init__(message)
        self.stage = stage
        self.smallest_singular_value = smallest_singular_value


class NumericalError(ProxPathError):
    """Numerical breakdown such as a non-PSD Gram matrix after jitter."""
