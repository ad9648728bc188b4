"""Exception types raised across the package."""


class DeepRecError(Exception):
    """Base class for all package errors."""


class ConfigError(DeepRecError, ValueError):
    """Invalid configuration values (bounds, counts, rates)."""


class DimensionError(DeepRecError, ValueError):
    """Array shapes disagree with each other or with the declared dims."""


class MetricError(DeepRecError, ValueError):
    """A metric is undefined for the given input."""


class DivergenceError(DeepRecError, ArithmeticError):
    """An iterate became non-finite."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class NumericError(DeepRecError, ArithmeticError):
    """Non-finite activation inside the network."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class TrainingError(DeepRecError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, state=None):
        super().__init__(message)
        self.epoch = epoch
        self.state = state


class WeightFileError(DeepRecError, ValueError):
    """Base class for weight file problems."""


class WeightParseError(WeightFileError):
    """Malformed weight file; carries the offending line number."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class WeightFormatError(WeightFileError):
    """Weight file is well formed but its header disagrees with its payload."""


class InstanceFileError(DeepRecError, ValueError):
    """Instance JSON is missing fields or holds inconsistent arrays."""
