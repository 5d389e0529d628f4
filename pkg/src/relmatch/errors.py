"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ParameterError(ValueError):
    """A scalar hyperparameter is outside its admissible range."""


class ConfigError(ValueError):
    """Inconsistent model, corpus or training configuration."""


class ContractError(ValueError):
    """Inputs violate an operation's precondition."""


class UsageError(RuntimeError):
    """The tape API was used incorrectly."""


class FormatError(ValueError):
    """Malformed tensor file."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset
