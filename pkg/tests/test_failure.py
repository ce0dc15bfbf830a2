import pytest

from failure import (
    BanditBonusError, ConfigError, DomainError, FailureType, InconsistencyError, InvariantError,
    NoRootError, RangeError, RegimeError, SolverError, exit_code_for,
)


@pytest.mark.parametrize("exc, code", [
    (ConfigError("x"), 2),
    (InvariantError("x"), 3),
    (RangeError("x"), 4),
    (NoRootError("x"), 5),
    (RegimeError("x"), 6),
    (InconsistencyError("x"), 7),
    (ValueError("x"), 1),
])
def test_exit_codes(exc, code):
    assert exit_code_for(exc) == code


def test_subclasses_share_kind():
    assert isinstance(RangeError("x"), DomainError)
    assert isinstance(NoRootError("x"), SolverError)


def test_failure_type_override():
    err = BanditBonusError("late", FailureType.IO)
    assert err.failure_type is FailureType.IO
    assert exit_code_for(err) == 9
