import numpy as np
import pytest

from config import SolverSettings
from continuous import ContinuousModel, solve
from cost_model import CostDistribution
from discrete import DiscreteModel, UniformR1
from metrics import reset_metrics
from planner import solve_planner


@pytest.fixture(autouse=True)
def fresh_metrics():
    reset_metrics()
    yield


@pytest.fixture(scope="session")
def settings():
    # Coarser than the CLI default to keep the marches quick
    return SolverSettings(grid_step=1e-3, store_points=401)


@pytest.fixture(scope="session")
def unit_costs():
    return CostDistribution.uniform(1.0)


@pytest.fixture(scope="session")
def two_period(unit_costs):
    return DiscreteModel.from_law(2, 0.95, 2.0, UniformR1(4.0), unit_costs)


@pytest.fixture(scope="session")
def large_cap_model(unit_costs):
    return ContinuousModel.with_share(0.5, 0.8, 7.0, 0.5, unit_costs, assume_large_cbar=True)


@pytest.fixture(scope="session")
def capped_model(unit_costs):
    return ContinuousModel(0.5, 0.8, 20.0, 8.0, unit_costs)


@pytest.fixture(scope="session")
def large_cap_policy(large_cap_model, settings):
    return solve(large_cap_model, settings)


@pytest.fixture(scope="session")
def capped_policy(capped_model, settings):
    return solve(capped_model, settings)


@pytest.fixture(scope="session")
def planner_solution(large_cap_model, settings):
    return solve_planner(large_cap_model, settings)


def _five_point_slopes(curve, lo, hi):
    """
    Five-point central differences of a marched curve at the interior nodes
    in (lo, hi) whose four neighbours sit one uniform step apart.
    Returns (index, slope) arrays.
    """
    alphas, values = curve.alphas, curve.values
    index, slopes = [], []
    for i in range(2, len(alphas) - 2):
        if not (lo < alphas[i] < hi):
            continue
        steps = np.diff(alphas[i - 2:i + 3])
        h = steps.mean()
        if np.max(np.abs(steps - h)) > 1e-12:
            continue
        index.append(i)
        slopes.append((-values[i + 2] + 8.0 * values[i + 1] - 8.0 * values[i - 1] + values[i - 2]) / (12.0 * h))
    return np.array(index, dtype=int), np.array(slopes)


@pytest.fixture(scope="session")
def five_point_slopes():
    return _five_point_slopes
