"""Exception hierarchy shared by the library and the command line.

Every error carries a short machine-readable ``code`` and the process exit
status the CLI should use when it escapes a command.
"""

from __future__ import annotations

from typing import Any

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_MODEL = 3
EXIT_VALIDATION = 4


class CraneSwingError(Exception):
    code = "error"
    exit_code = EXIT_INPUT

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"error": self.code, "message": self.message}
        if self.details:
            out["details"] = self.details
        return out


class InvalidIntrinsicsError(CraneSwingError, ValueError):
    code = "invalid-intrinsics"


class DomainError(CraneSwingError, ValueError):
    code = "domain"


class OutOfViewError(CraneSwingError, ValueError):
    """The payload lies at or behind the image plane (cos of viewing angle <= 0)."""

    code = "out-of-view"
    exit_code = EXIT_MODEL


class UndefinedThetaError(CraneSwingError, ValueError):
    code = "undefined-theta"
    exit_code = EXIT_MODEL


class InconsistentGeometryError(CraneSwingError, ValueError):
    code = "inconsistent-geometry"
    exit_code = EXIT_MODEL


class InvalidValidationInputError(CraneSwingError, ValueError):
    code = "invalid-validation-input"


class InsufficientDataError(CraneSwingError, ValueError):
    code = "insufficient-data"


class DegenerateDataError(CraneSwingError, ValueError):
    code = "degenerate-data"


class CalibrationInfeasibleError(CraneSwingError, ArithmeticError):
    """The moment equation for the camera angle has no real solution."""

    code = "calibration-infeasible"
    exit_code = EXIT_MODEL


class LoadFailureError(CraneSwingError, IOError):
    code = "load-failure"


class JoinConflictError(CraneSwingError, ValueError):
    code = "join-conflict"


class ConfigError(CraneSwingError, ValueError):
    code = "config"


class ConfigMismatchError(CraneSwingError, ValueError):
    code = "config-mismatch"


class ValidationFailureError(CraneSwingError):
    code = "validation-failure"
    exit_code = EXIT_VALIDATION
