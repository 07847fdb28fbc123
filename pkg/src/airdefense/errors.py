"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ConfigError -> 2, DataError -> 3,
NumericError -> 4. Everything else is a plain failure.
"""


class InputError(ValueError):
    """Malformed operation input (shape mismatch, empty batch, bad range)."""


class ConfigError(ValueError):
    """Invalid configuration value or experiment config file."""


class DataError(RuntimeError):
    """Dataset missing, unreadable, or malformed artifact file."""


class NumericError(RuntimeError):
    """Non-finite values encountered (gradients, logits)."""


class ProtocolError(RuntimeError):
    """Continual-training protocol violation, e.g. missing teacher snapshot."""
