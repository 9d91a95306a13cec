"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class ContractViolation(RuntimeError):
    """A caller broke an operation's precondition."""


class NumericError(FloatingPointError):
    """A non-finite value appeared where a finite one is required."""
