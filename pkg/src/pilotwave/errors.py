"""Exception types shared across the package."""


class DomainError(ValueError):
    """Raised when an argument lies outside its mathematical domain."""


class NumericRangeError(ArithmeticError):
    """Raised when a computation leaves the representable floating range."""


class MetricError(RuntimeError):
    """Raised when a density estimate cannot be trusted (box too small, dead cells)."""


class EnsembleError(RuntimeError):
    """Raised when ensemble construction or evolution fails as a whole."""


class ConfigError(ValueError):
    """Raised for malformed configuration files or inconsistent settings."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for CLI reporting."""

    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage
