import math

import pytest

from config import THREADS_ENV_VAR, RunConfig, SolverSettings
from failure import ConfigError

DISCRETE = """
[discrete]
horizon = {horizon}
discount = 0.95
r2 = 2

[cost]
cbar = 1
"""


def discrete(horizon="2"):
    return RunConfig.from_text(DISCRETE.format(horizon=horizon))


def test_model_kind_and_typed_access():
    run = discrete()
    assert run.model_kind == "discrete"
    assert run.get_float("discrete", "discount") == 0.95
    assert run.get_float("discrete", "er1", 1.5) == 1.5
    assert run.get_bool("continuous", "assume_large_cbar") is False


@pytest.mark.parametrize("raw, expected", [("2", 2), ("inf", math.inf), ("Infinity", math.inf)])
def test_horizon_forms(raw, expected):
    assert discrete(raw).horizon() == expected


@pytest.mark.parametrize("raw", ["0", "2.5", "forever"])
def test_bad_horizon(raw):
    with pytest.raises(ConfigError):
        discrete(raw).horizon()


@pytest.mark.parametrize("text", [
    "[cost]\ncbar = 1\n",
    "[discrete]\nhorizon = 2\n[continuous]\ndiscount_rate = 0.5\n",
    "[discrete]\nhorizon = 2\nsurprise = 1\n",
    "[discrete]\nhorizon = 2\n[extras]\nkey = 1\n",
    "not an ini file",
])
def test_rejected_configs(text):
    with pytest.raises(ConfigError):
        RunConfig.from_text(text)


def test_bad_number():
    run = RunConfig.from_text("[discrete]\nhorizon = 2\ndiscount = high\n")
    with pytest.raises(ConfigError, match="discount"):
        run.get_float("discrete", "discount")
    with pytest.raises(ConfigError, match="r2"):
        run.require_float("discrete", "r2")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_file(tmp_path / "nope.ini")


def test_solver_settings_validation():
    with pytest.raises(ConfigError):
        SolverSettings(grid_step=1e-3, launch_offset=1e-3)
    with pytest.raises(ConfigError):
        SolverSettings(grid_step=0.5)
    run = RunConfig.from_text("[continuous]\ndiscount_rate = 0.5\n[solver]\ngrid_step = 5e-4\n")
    assert run.solver_settings().grid_step == 5e-4


def test_threads_from_environment(monkeypatch):
    run = RunConfig.from_text("[continuous]\ndiscount_rate = 0.5\n[sim]\nthreads = 2\n")
    monkeypatch.delenv(THREADS_ENV_VAR, raising=False)
    assert run.threads() == 2
    monkeypatch.setenv(THREADS_ENV_VAR, "6")
    assert run.threads() == 6
    monkeypatch.setenv(THREADS_ENV_VAR, "many")
    with pytest.raises(ConfigError):
        run.threads()


def test_resolved_fills_defaults(monkeypatch):
    monkeypatch.delenv(THREADS_ENV_VAR, raising=False)
    run = discrete()
    run.override("output", "directory", "elsewhere")
    resolved = run.resolved()
    assert resolved.get_float("solver", "grid_step") == 1e-4
    assert resolved.get_int("sim", "threads") == 1
    assert resolved.output_dir().name == "elsewhere"
    again = RunConfig.from_text(resolved.to_ini())
    assert again.as_dict() == resolved.as_dict()
