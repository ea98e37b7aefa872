"""Exception hierarchy. The CLI maps each class to an exit code."""


class GseLabError(Exception):
    exit_code = 2


class ParseError(GseLabError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConsistencyError(GseLabError, ValueError):
    pass


class ValidationError(GseLabError, ValueError):
    pass


class DomainError(GseLabError, ValueError):
    pass


class CouplingError(GseLabError, ValueError):
    pass


class BudgetExceeded(GseLabError, RuntimeError):
    exit_code = 3


class InvariantViolation(GseLabError, AssertionError):
    exit_code = 4
