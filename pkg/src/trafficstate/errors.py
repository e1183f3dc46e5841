"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ValidationError (and subclasses) -> 1,
OSError -> 2, NumericalError -> 3.
"""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class ParseError(ValidationError):
    """Malformed input text. Carries the offending source location."""

    def __init__(self, message, line_no=None, path=None):
        self.line_no = line_no
        self.path = path
        where = ""
        if path is not None:
            where += str(path)
        if line_no is not None:
            where += f":{line_no}"
        super().__init__(f"{where}: {message}" if where else message)


class ContractError(ValidationError):
    """Caller broke an API contract (e.g. non-monotonic frame index)."""


class NumericalError(ArithmeticError):
    """Numerically degenerate computation (singular matrix, zero variance)."""
