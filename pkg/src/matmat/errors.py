"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1,
data problems exit 2, training divergence exits 3.
"""


class DataError(Exception):
    """Unreadable, malformed, or invalid input data."""


class ConfigError(ValueError):
    """Invalid configuration value or violated call precondition."""


class DivergenceError(RuntimeError):
    """SGD training produced non-finite values."""


class MetricError(ValueError):
    """A metric's input does not satisfy its preconditions."""
