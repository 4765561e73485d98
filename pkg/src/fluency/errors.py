"""Exception hierarchy shared across the package.

Exit codes used by the CLI: 2 usage, 3 data, 4 numeric.
"""


class FluencyError(Exception):
    exit_code = 1
    kind = "error"


class DataError(FluencyError):
    """Malformed or inconsistent input data."""

    exit_code = 3
    kind = "data"


class NumericError(FluencyError):
    """A computation could not produce a valid result."""

    exit_code = 4
    kind = "numeric"


class DeadEndError(NumericError):
    """No candidate exemplar remains at a generation step.

    ``partial`` carries whatever sequence was produced before the dead end,
    so callers that prefer truncation over failure can recover it.
    """

    def __init__(self, message: str, partial: tuple = ()):
        super().__init__(message)
        self.partial = tuple(partial)
