"""Exception types shared by all cklab modules.

Each class maps onto one CLI exit code (see :mod:`cklab.cli`).
"""


class CklabError(Exception):
    """Base class for library errors."""


class InvalidArgumentError(CklabError, ValueError):
    pass


class InfeasibleModelError(CklabError):
    """The FDT feasibility condition sup phi(x)(1-x) >= b fails."""


class InstabilityError(CklabError):
    """A solver left its invariant envelope; usually the step is too large."""


class DivergenceError(InstabilityError):
    pass


class NonConvergenceError(CklabError):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ResourceLimitError(CklabError):
    pass


class HorizonTooShortError(CklabError):
    pass


class InvalidWindowError(InvalidArgumentError):
    pass
