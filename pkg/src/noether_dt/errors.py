"""Exception hierarchy shared by every layer of the package."""


class NoetherDTError(Exception):
    """Base class for all errors raised by noether_dt."""


class DomainError(NoetherDTError, ArithmeticError):
    """An operation was evaluated outside its domain (ln of 0, division by 0, ...)."""


class ExprSyntaxError(NoetherDTError, ValueError):
    """Malformed expression text.

    ``offset`` is the byte offset into the UTF-8 encoded source where the
    problem was detected.
    """

    def __init__(self, message, offset, text=""):
        self.message = message
        self.offset = offset
        self.text = text
        super().__init__(f"{message} (at offset {offset})")


class UnknownFunctionError(ExprSyntaxError):
    pass


class UnboundVariableError(NoetherDTError, LookupError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unbound variable '{name}'")

    def __str__(self):
        return self.args[0]


class ModelError(NoetherDTError, ValueError):
    """Inconsistent problem, trajectory, or symmetry data."""


class ConfigError(NoetherDTError, ValueError):
    """Invalid configuration document."""
