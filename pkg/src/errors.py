"""
Error types shared by every stage of the toolkit.
The CLI maps each family to its exit code.
"""


class ArticError(Exception):
    """Root of all toolkit errors"""

    exit_code = 2


class ConfigError(ArticError):
    """Invalid configuration or flag combination, raised before any work starts"""

    exit_code = 1


class DataError(ArticError):
    """Malformed or inconsistent input data"""

    exit_code = 2

    def __init__(self, message: str, path: object | None = None, line: int | None = None):
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class NumericError(ArticError, ArithmeticError):
    """NaN or Inf produced by a computation"""

    exit_code = 3
