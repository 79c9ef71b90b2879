"""Exception and warning types shared by all modules."""

from __future__ import annotations

__all__ = [
    "FdpmError",
    "PoleError",
    "DomainError",
    "ParameterError",
    "ConfigError",
    "ValidationError",
    "ResourceLimitError",
    "ConstraintError",
    "AmbiguityWarning",
    "DegeneratePointError",
    "AnchorError",
    "StiffnessError",
    "BranchCollisionError",
    "NoStieltjesBranchError",
    "DegenerateExpansionError",
    "StepError",
    "HigherOrderRootError",
    "CuspProximityError",
    "DegenerateEdgeError",
    "CorrectionUnavailableWarning",
]


class FdpmError(Exception):
    """Base class for all errors raised by this package."""


class PoleError(FdpmError, ZeroDivisionError):
    """Evaluation point coincides with a pole (an eigenvalue)."""


class DomainError(FdpmError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ParameterError(FdpmError, ValueError):
    """Invalid model parameters."""


class ConfigError(FdpmError, ValueError):
    """Invalid or infeasible configuration."""


class ValidationError(FdpmError, ValueError):
    """Input data failed a structural check (e.g. symmetry)."""


class ResourceLimitError(FdpmError, MemoryError):
    """Requested work exceeds a configured resource cap."""


class ConstraintError(FdpmError):
    """Linear constraints leave no admissible coefficient vector."""


class AmbiguityWarning(UserWarning):
    """The least-squares null vector is not well separated."""


class DegeneratePointError(FdpmError):
    """All coefficients of the polynomial in ``m`` vanish at ``z``."""


class AnchorError(FdpmError):
    """The anchor root fails the Herglotz test."""


class StiffnessError(FdpmError):
    """Continuation could not advance after the maximal subdivision depth.

    The offending location is kept in :attr:`where` as a dictionary so
    callers (and the CLI) can report it.
    """

    def __init__(self, message: str, where: dict | None = None):
        super().__init__(message)
        self.where = dict(where or {})


class BranchCollisionError(StiffnessError):
    """Continuation hit a point where ``dP/dm`` vanishes."""


class StepError(StiffnessError):
    """Newton correction failed to converge at the finest step size."""


class NoStieltjesBranchError(FdpmError):
    """The leading-order polynomial has no root compatible with ``-1/z``."""


class DegenerateExpansionError(FdpmError):
    """The moment recurrence is singular (``L'(theta_0) = 0``)."""


class HigherOrderRootError(FdpmError):
    """The leading coefficient has a multiple root at the atom location."""


class CuspProximityError(FdpmError):
    """The edge-velocity Jacobian is singular, typically near a cusp."""


class DegenerateEdgeError(FdpmError, ZeroDivisionError):
    """The Hilbert transform vanishes at the edge."""


class CorrectionUnavailableWarning(UserWarning):
    """The finite-size correction did not locate a sign change."""
