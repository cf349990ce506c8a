"""Exception hierarchy shared by every snnforge module."""


class SnnforgeError(Exception):
    """Base class for all errors raised by snnforge."""


class DimensionError(SnnforgeError, ValueError):
    """Operand shapes do not conform."""


class ConfigurationError(SnnforgeError, ValueError):
    """An argument or configuration value is outside its allowed range."""


class DataError(SnnforgeError, ValueError):
    """A dataset is empty, inconsistent, or carries out-of-range labels."""


class FormatError(SnnforgeError, ValueError):
    """A file on disk does not follow the expected layout."""
