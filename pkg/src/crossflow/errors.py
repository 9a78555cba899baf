"""Exception hierarchy shared across the package."""


class CrossflowError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(CrossflowError):
    """Invalid configuration value or malformed config file."""


class DomainError(CrossflowError):
    """Evaluation requested outside a trajectory's time domain."""


class SolverError(CrossflowError):
    """Root finder failed to converge or produced an inconsistent solution."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class CaseInapplicable(CrossflowError):
    """The requested constrained-arc case does not apply to this instance.

    Raised e.g. when a safety-constrained solve finds no junction inside the
    horizon; the composition logic catches this and tries other cases.
    """


class UnsupportedCaseError(CrossflowError):
    """A fixed-terminal-time instance requires a v_min/u_min-saturated arc,
    which is outside the solver's supported case set."""


class InfeasibleError(CrossflowError):
    """No feasible trajectory exists (e.g. terminal-time window is empty)."""

    def __init__(self, message, t_lower=None, t_upper=None):
        super().__init__(message)
        self.t_lower = t_lower
        self.t_upper = t_upper


class ConditioningError(CrossflowError):
    """A linear system was too ill-conditioned to solve reliably."""
