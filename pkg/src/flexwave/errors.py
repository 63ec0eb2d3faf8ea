"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not agree."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class DegenerateInputError(ValueError):
    """Input for which the quantity is undefined (e.g. an all-zero block)."""


class ContractError(ValueError):
    """Caller violated a documented precondition."""


class ConfigError(ValueError):
    """Invalid experiment or channel configuration."""


class OracleInvalidError(RuntimeError):
    """A test oracle cannot be trusted (e.g. non-deterministic loss)."""


class NumericFailure(RuntimeError):
    """Non-finite values appeared during optimization.

    Attributes:
        dump: diagnostic snapshot of the offending step.
    """

    def __init__(self, message: str, dump: dict | None = None):
        super().__init__(message)
        self.dump = dump or {}
