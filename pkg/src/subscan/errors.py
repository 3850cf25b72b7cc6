"""Exception hierarchy shared across the package.

CLI exit-code mapping: ConfigError (and subclasses) -> 2,
NumericalError -> 3. Plain ValueError marks API misuse (bad arguments
from calling code) and is not translated.
"""


class SubscanError(Exception):
    """Base class for errors raised by subscan."""


class ConfigError(SubscanError):
    """Invalid configuration, scenario description, or input data."""


class DataFormatError(ConfigError):
    """Malformed point-cloud or artifact file; carries the offending location."""

    def __init__(self, message, *, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class GeometryError(ConfigError):
    """Geometric construction failed (degenerate neighborhood, infeasible placement)."""


class NumericalError(SubscanError):
    """A numeric routine produced non-finite or invalid values."""
