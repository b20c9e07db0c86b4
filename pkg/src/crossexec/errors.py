"""Error types raised by the solver library."""


class CrossExecError(Exception):
    """Base class for all library errors."""


class NumericDomainError(CrossExecError, ValueError):
    """A quantity left its admissible numeric domain (NaN/inf eigenvalue, ...)."""


class IllConditionedImpactError(CrossExecError, ValueError):
    """The scaled resilience gamma^{-1/2} rho gamma^{1/2} is non-finite on the grid."""


class NoValidFError(CrossExecError, ValueError):
    """No bounded F with R F = Q exists on the grid.

    Carries the first offending grid time in ``time``.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class SingularDriverError(CrossExecError, RuntimeError):
    """The inverted block R + 4 sum_k C^k Y C^k lost uniform definiteness.

    Signals a violated convexity assumption; ``time`` is where the backward
    sweep failed.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class UnsupportedScopeError(CrossExecError, ValueError):
    """Requested computation is outside the deterministic-coefficient scope."""


class ConfigurationError(CrossExecError, ValueError):
    """Missing or inconsistent optional inputs (e.g. no Brownian path for sigma != 0)."""


class DegenerateInputError(CrossExecError, ValueError):
    """Input degenerate for the requested demo (e.g. symmetric impact in the round trip)."""


class PreconditionError(CrossExecError, ValueError):
    """A documented precondition of the operation is violated."""


class ShapeError(CrossExecError, ValueError):
    """Grid or array shape mismatch between coupled objects."""
