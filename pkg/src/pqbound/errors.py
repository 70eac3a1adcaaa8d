"""Exception hierarchy shared by all modules."""


class PQBoundError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(PQBoundError, ValueError):
    """Malformed configuration, expression, or problem description."""


class DomainViolationError(PQBoundError, ValueError):
    """A point lies outside the declared sampling/solving domain."""


class NonFiniteError(PQBoundError, FloatingPointError):
    """An evaluation produced inf or nan."""


class SingularityError(PQBoundError, ArithmeticError):
    """An analytic gradient was requested at a non-differentiable point."""


class DegenerateSampleError(PQBoundError, ValueError):
    """Too many samples had a vanishing denominator to estimate a ratio."""


class ExponentError(PQBoundError, ValueError):
    """An exponent formula left its admissible range (nonpositive result)."""


class MissingOverrideError(ExponentError):
    """The Sobolev conjugate needs an explicit value when p >= n."""


class PreconditionError(PQBoundError, ValueError):
    """An operation was called outside its precondition."""


class ConvergenceError(PQBoundError, RuntimeError):
    """The nonlinear solver did not reach the residual tolerance."""

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history or []


class SingularJacobianError(ConvergenceError):
    """The linearised system could not be solved."""


class ThresholdError(PQBoundError, RuntimeError):
    """No level d in the bracket satisfies the De Giorgi smallness condition."""


class InvalidCertificateError(PQBoundError, RuntimeError):
    """A certificate was produced but the observed maximum exceeds d."""


class UncoveredProblemError(PQBoundError, ValueError):
    """The problem does not satisfy the hypotheses of either theorem."""
