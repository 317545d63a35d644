"""Exception types shared across the simulator."""


class ShapeError(ValueError):
    """Operands have incompatible shapes or architectures."""


class DomainError(ValueError):
    """An argument lies outside its documented domain."""


class ParseError(ValueError):
    """A file could not be parsed; the message names the offending line."""


class ConfigError(ValueError):
    """An experiment configuration is invalid; the message names the key."""


class ExperimentError(RuntimeError):
    """An experiment aborted; the message carries round/client context."""
