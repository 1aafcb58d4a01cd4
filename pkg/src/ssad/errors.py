class ConfigError(ValueError):
    """Invalid configuration or flag combination (CLI exit code 1)."""


class DataError(ValueError):
    """Malformed or inconsistent input data (CLI exit code 2)."""


class NumericalError(RuntimeError):
    """Optimization or evaluation failure (CLI exit code 3)."""


class InfeasibleError(NumericalError):
    """The constraint polytope of a solver is empty; message names the
    failing constraint."""
