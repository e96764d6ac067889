class ConfigError(ValueError):
    """Invalid sizes, shapes or configuration values."""


class NumericalError(RuntimeError):
    """A solver, eigensolver or training run produced unusable numbers."""
