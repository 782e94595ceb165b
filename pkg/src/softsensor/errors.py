"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: ConfigError -> 2,
DataError -> 3, OutputError -> 4.
"""


class SoftSensorError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SoftSensorError):
    """Invalid configuration: unknown method, bad parameter, missing field."""


class DataError(SoftSensorError):
    """Invalid or degenerate data: bad cells, empty selections, singular inputs."""


class OutputError(SoftSensorError):
    """Output location cannot be written."""


class ConvergenceError(SoftSensorError):
    """An iterative solver failed to converge within its budget."""
