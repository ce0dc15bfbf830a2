"""
Failure kinds, exit codes and the exception hierarchy
"""

from enum import Enum
from typing import Optional


class FailureType(Enum):
    """Types of failures that can occur, with the process exit code for each"""
    CONFIG = "config"
    INVARIANT = "invariant"
    DOMAIN = "domain"
    SOLVER = "solver"
    REGIME = "regime"
    INCONSISTENT = "inconsistent"
    WELFARE = "welfare"
    IO = "io"

    @property
    def exit_code(self) -> int:
        return _EXIT_CODES[self]


_EXIT_CODES = {
    FailureType.CONFIG: 2,
    FailureType.INVARIANT: 3,
    FailureType.DOMAIN: 4,
    FailureType.SOLVER: 5,
    FailureType.REGIME: 6,
    FailureType.INCONSISTENT: 7,
    FailureType.WELFARE: 8,
    FailureType.IO: 9,
}

UNEXPECTED_EXIT_CODE = 1


class BanditBonusError(Exception):
    """
    Base class for every error raised by the solvers, simulators and CLI.
    """

    failure_type: FailureType = FailureType.SOLVER

    def __init__(self, message: str, failure_type: Optional[FailureType] = None):
        super().__init__(message)
        if failure_type is not None:
            self.failure_type = failure_type


class ConfigError(BanditBonusError):
    failure_type = FailureType.CONFIG


class InvariantError(BanditBonusError):
    """A model assumption or a tabulated-law invariant does not hold."""
    failure_type = FailureType.INVARIANT


class DomainError(BanditBonusError):
    failure_type = FailureType.DOMAIN


class NegativeInputError(DomainError):
    """Negative argument to the virtual-value inverse."""


class RangeError(DomainError):
    """Argument above the information rent at the support cap."""


class SolverError(BanditBonusError):
    failure_type = FailureType.SOLVER


class SingularityError(SolverError):
    pass


class StepRejectedError(SolverError):
    """Accepted state drifted below the pasting branch."""


class NonTerminationError(SolverError):
    pass


class NoRootError(SolverError):
    pass


class RegimeError(BanditBonusError):
    failure_type = FailureType.REGIME


class InconsistencyError(BanditBonusError):
    failure_type = FailureType.INCONSISTENT


class WelfareError(BanditBonusError):
    """Welfare ordering violated; carries the offending belief."""
    failure_type = FailureType.WELFARE

    def __init__(self, message: str, alpha: float):
        super().__init__(message)
        self.alpha = alpha


class ArtifactIOError(BanditBonusError):
    failure_type = FailureType.IO


def exit_code_for(exc: BaseException) -> int:
    """
    Map an exception to the process exit code.
    """
    if isinstance(exc, BanditBonusError):
        return exc.failure_type.exit_code
    return UNEXPECTED_EXIT_CODE
