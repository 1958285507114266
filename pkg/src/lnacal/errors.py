"""Exception types shared across the package."""


class LnacalError(Exception):
    """Base class for all package-specific errors."""


class ContractError(LnacalError):
    """An API contract was violated (wrong combos supplied, spec mismatch)."""


class FileFormatError(LnacalError):
    """A data or model file failed to parse.

    ``line`` is the 1-based line number of the offending row when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InsufficientDataError(LnacalError):
    """Too few samples/boards to perform the requested operation."""


class TrainingError(LnacalError):
    """Training could not proceed (degenerate data, bad spec)."""
