"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 1,
DataError -> 2, NumericalError -> 3.
"""


class ConfigError(ValueError):
    """Invalid configuration value or unknown config key."""


class DataError(ValueError):
    """Malformed embedding file, manifest, or incompatible checkpoint."""


class NumericalError(RuntimeError):
    """Non-finite value where a finite one is required."""
