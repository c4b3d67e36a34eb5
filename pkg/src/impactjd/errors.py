"""
Exception hierarchy for impactjd.

Every exception carries the exit code the CLI reports for it, so the
command-line front door can map failures without a lookup table:

- 2: configuration errors
- 3: model validation errors
- 4: numerical failures
- 5: validation-suite check failures
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence


class ImpactJDError(Exception):
    """Base class for all errors raised by impactjd."""

    exit_code: int = 1

    def record(self) -> dict[str, Any]:
        """Machine-readable error record (one JSON object per failure)."""
        return {
            "error": type(self).__name__,
            "message": str(self),
            "exit_code": self.exit_code,
        }


class ConfigError(ImpactJDError):
    """Raised when a run configuration is malformed or incomplete."""

    exit_code = 2


class IncompatibleSurfaceError(ConfigError):
    """Raised when a price surface was solved for different model inputs."""

    pass


@dataclass(frozen=True)
class Violation:
    """One violated model invariant, located on the grid when applicable."""

    invariant: str
    detail: str
    t: float | None = None
    s: float | None = None

    def __str__(self) -> str:
        where = ""
        if self.t is not None or self.s is not None:
            where = f" at (t={self.t}, S={self.s})"
        return f"{self.invariant}{where}: {self.detail}"


class ModelValidationError(ImpactJDError):
    """Raised when model parameters break an invariant."""

    exit_code = 3

    def __init__(self, message: str, violations: Sequence[Violation] = ()) -> None:
        super().__init__(message)
        self.violations = tuple(violations)

    def record(self) -> dict[str, Any]:
        rec = super().record()
        rec["violations"] = [
            {"invariant": v.invariant, "detail": v.detail, "t": v.t, "S": v.s}
            for v in self.violations
        ]
        return rec


class JumpFactorError(ModelValidationError):
    """Raised when a jump factor 1 + a*sigma + b*lambda*zeta is not positive."""

    pass


class NumericalError(ImpactJDError):
    """Raised when a numerical procedure fails."""

    exit_code = 4


class DegenerateHedgeError(NumericalError):
    """Raised when the variance-minimizing hedge has a vanishing denominator."""

    pass


class CheckFailure(ImpactJDError):
    """Raised when one or more validation checks fail."""

    exit_code = 5


__all__ = [
    "ImpactJDError",
    "ConfigError",
    "IncompatibleSurfaceError",
    "Violation",
    "ModelValidationError",
    "JumpFactorError",
    "NumericalError",
    "DegenerateHedgeError",
    "CheckFailure",
]
