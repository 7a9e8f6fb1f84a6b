"""Exception types shared across the package."""


class ParseError(ValueError):
    """Malformed input file. Carries the offending path and 1-based line number."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = str(path) if path is not None else ""
        if line is not None:
            prefix = f"{prefix}:{line}" if prefix else f"line {line}"
        super().__init__(f"{prefix}: {message}" if prefix else message)


class UnsupportedVersionError(ValueError):
    """Model file written with a format version this build does not read."""


class DivergenceError(RuntimeError):
    """Optimization blew up. Carries the iteration at which it was detected."""

    def __init__(self, iteration, message):
        self.iteration = iteration
        super().__init__(message)
