"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: usage/configuration
problems exit 1, data and file-format problems exit 2, failed numerical
checks exit 3.
"""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(ValueError):
    """A configuration value is invalid (bad variant name, divisibility, ...)."""


class DataError(ValueError):
    """Input data violates a contract (label out of range, wrong spec, ...)."""


class FormatError(ValueError):
    """A file does not conform to its on-disk format."""
