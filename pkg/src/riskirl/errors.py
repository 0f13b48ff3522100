"""Shared exception and warning types."""


class RiskIrlError(Exception):
    """Base class for errors raised by this package."""


class DimensionMismatchError(RiskIrlError, ValueError):
    """Operands live in different outcome spaces."""


class EmptyEnvelopeError(RiskIrlError, ValueError):
    """A risk envelope (or product polytope) became empty."""


class LpFaultError(RiskIrlError, RuntimeError):
    """The LP solver failed numerically (not infeasible/unbounded, which are statuses)."""


class DegenerateLpError(RiskIrlError, RuntimeError):
    """An LP stayed degenerate after the projection-bump and perturbation heuristics."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump


class InconsistentDemonstrationError(RiskIrlError, ValueError):
    """A demonstration admits no KKT certificate inside the current envelope."""


class InconsistentDemonstrationWarning(UserWarning):
    """A demonstration was skipped (infeasible KKT LP or emptying cut)."""


class PlannerError(RiskIrlError, RuntimeError):
    """The inner minimization of a forward problem failed to converge."""
