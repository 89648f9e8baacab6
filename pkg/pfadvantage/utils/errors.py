class PFAException(Exception):
    """pfadvantage base exception class"""

    pass


class UsageError(ValueError, PFAException):
    """Command-line flags or arguments are inconsistent"""

    pass


class DomainError(ValueError, PFAException):
    """A numerical parameter is outside of its documented domain"""

    pass


class DimensionMismatchError(ValueError, PFAException):
    """Operand shapes do not agree"""

    pass


class InvalidCaseError(ValueError, PFAException):
    """A network case violates a structural invariant"""

    pass


class CaseParseError(InvalidCaseError):
    """Case-file text does not follow the MATPOWER subset grammar"""

    def __init__(self, msg, lineno=None):
        if lineno is not None:
            msg = f"line {lineno}: {msg}"
        super().__init__(msg)
        self.lineno = lineno


class InvalidBranchError(InvalidCaseError):
    """Branch reactance is not positive, or the branch is a self loop"""

    pass


class UnknownBusError(KeyError, PFAException):
    """A bus id that does not exist in the case was referenced"""

    def __str__(self):
        # KeyError quotes its argument; keep messages readable
        return str(self.args[0]) if self.args else ""


class DisconnectedNetworkError(InvalidCaseError):
    """The in-service branch graph does not connect every bus"""

    pass


class NotPositiveDefiniteError(ArithmeticError, PFAException):
    """
    A computation revealed that the operator is not positive definite.

    Raised on CG breakdown (p^T A p <= 0), on a negative energy quadratic
    form, and when an eigen-iteration produces a non-positive estimate.
    """

    ...


class ConvergenceError(RuntimeError, PFAException):
    """An iteration hit its cap without meeting its tolerance"""

    def __init__(self, msg, iterations=None):
        super().__init__(msg)
        self.iterations = iterations


class SingularMatrixError(ArithmeticError, PFAException):
    """The matrix is rank deficient"""

    pass


class SimulationSizeError(ValueError, PFAException):
    """The system is too large for exact statevector simulation"""

    pass


class PostselectionError(RuntimeError, PFAException):
    """The projected HHL state has zero norm"""

    ...


class ExceptionBundle(RuntimeError, PFAException):
    """One or more exceptions was raised during a batch of independent jobs"""

    def __init__(self, msg, exceptions):
        super().__init__(msg)
        self.exceptions = exceptions
