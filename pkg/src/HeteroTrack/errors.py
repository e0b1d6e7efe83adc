"""Exception types raised by the HeteroTrack library.

main.py maps these onto exit codes (see ``EXIT_CODES``).
"""

from typing import Any, Optional


class HeteroTrackError(Exception):
    """Root of every error raised on purpose by this package."""


class ConfigError(HeteroTrackError, ValueError):
    """Scenario configuration is malformed or violates an invariant."""


class InfeasibleScenario(ConfigError):
    """Not enough sufficient robots / limited pairs for the requested targets."""


class ZeroAngularRate(ConfigError):
    """Circular target motion needs a nonzero angular rate."""


class CoincidentPositions(HeteroTrackError, ValueError):
    """Robot and target share a position, so the bearing direction is undefined."""


class SingularInnovationCovariance(HeteroTrackError, ArithmeticError):
    """EKF innovation covariance S cannot be inverted."""


class NoConvergence(HeteroTrackError, RuntimeError):
    """Forward-backward sweep hit its iteration cap above tolerance."""

    def __init__(self, message: str, solution: Optional[Any] = None):
        super().__init__(message)
        # 未收敛时仍然返回当前解, 由调用方决定是否使用
        self.solution = solution


class InstanceTooLarge(HeteroTrackError, ValueError):
    """Exhaustive assignment requested on an instance above the size guard."""


class InvariantViolation(HeteroTrackError, AssertionError):
    """An assignment, conservation or approximation-bound invariant failed."""


EXIT_CODES = {
    InvariantViolation: 2,
    ConfigError: 3,
}


def exit_code_for(exc: BaseException) -> int:
    for exc_type, code in EXIT_CODES.items():
        if isinstance(exc, exc_type):
            return code
    return 1
