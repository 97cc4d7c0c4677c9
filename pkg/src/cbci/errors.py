"""Exception hierarchy shared across the package."""


class CbciError(Exception):
    """Base class for all package errors."""


class DomainError(CbciError, ValueError):
    """An argument lies outside the domain of the operation."""


class NotErgodicError(DomainError):
    """The mechanism admits no stationary distribution."""


class InconclusiveError(CbciError, ArithmeticError):
    """Quadrature neither converged nor provably diverged."""


class ConsistencyError(CbciError, ArithmeticError):
    """Two independent evaluation routes disagree beyond tolerance."""


class AlgorithmError(CbciError, ArithmeticError):
    """A structural guarantee (interlacing, positivity) was violated."""


class SolverError(CbciError, ArithmeticError):
    """An ODE or root solve failed its a-posteriori check."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
