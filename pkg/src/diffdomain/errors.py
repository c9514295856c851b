"""Exception hierarchy; the CLI maps each class to an exit code."""


class DiffDomainError(Exception):
    exit_code = 1


class ConfigurationError(DiffDomainError, ValueError):
    exit_code = 1


class SolverFailure(DiffDomainError, RuntimeError):
    """Iterative solve did not reach tolerance.

    Carries the final relative residual and the iteration count.
    """

    exit_code = 2

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0, step: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.step = step


class NumericalBreakdown(SolverFailure):
    exit_code = 2


class OutputError(DiffDomainError, OSError):
    exit_code = 3


class NonFiniteSample(DiffDomainError, ArithmeticError):
    def __init__(self, message: str, point):
        super().__init__(message)
        self.point = point
