"""Exception hierarchy shared by all modules."""


class ConcentraError(Exception):
    """Base class for all package errors."""


class ConfigError(ConcentraError):
    """Invalid configuration, domain specification or arguments (CLI exit 2)."""


class NumericsError(ConcentraError):
    """A numerical operation failed; the message names the operation (CLI exit 3)."""

    def __init__(self, operation, message):
        self.operation = operation
        super().__init__(f"{operation}: {message}")
