import math

import numpy as np
import pytest

from discrete import UniformR1
from failure import ConfigError, DomainError
from metrics import get_metrics
from sim import (
    FixedStrategyPolicy, PathStreams, SimConfig, bayes_update, path_generator, posterior_consistency,
    simulate_continuous, simulate_discrete, write_trace,
)
from strategy import Strategy


def test_bayes_update():
    assert bayes_update(0.5, 1.0, 0.1) == pytest.approx(0.475021, abs=1e-6)
    updated = bayes_update(np.array([0.2, 0.8]), 0.8, 0.01)
    assert np.all(updated < np.array([0.2, 0.8]))


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(dt=0.0)
    with pytest.raises(ConfigError):
        SimConfig(alpha0=1.0)
    with pytest.raises(ConfigError):
        SimConfig(dt=0.5).check_rates(0.8)
    assert SimConfig(n_paths=25, block_size=10).block_sizes() == [10, 10, 5]


def test_safe_arm_without_tail_is_exact(large_cap_model):
    cfg = SimConfig(dt=0.01, horizon=10.0, n_paths=50, block_size=20, tail_correction=False)
    result = simulate_continuous(FixedStrategyPolicy(large_cap_model, Strategy.SA), cfg)
    r, s = large_cap_model.r, large_cap_model.s
    assert result.mean == pytest.approx(s / r * (1.0 - math.exp(-r * 10.0)), rel=1e-9)
    assert result.std_error == pytest.approx(0.0, abs=1e-9)


def test_no_bonus_without_tail_is_exact(large_cap_model):
    cfg = SimConfig(dt=0.01, horizon=10.0, n_paths=50, block_size=50, alpha0=0.3, tail_correction=False)
    result = simulate_continuous(FixedStrategyPolicy(large_cap_model, Strategy.NB), cfg)
    r, lam, z, dt = large_cap_model.r, large_cap_model.lam, large_cap_model.lump_value, 0.01
    per_period = 0.3 * lam * (1.0 - math.exp(-(r + lam) * dt)) * z / (lam + r)
    expected = per_period * (1.0 - math.exp(-r * 10.0)) / (1.0 - math.exp(-r * dt))
    assert result.mean == pytest.approx(expected, rel=1e-9)
    # Flow value of the risky arm approaches alpha g / r as dt shrinks
    assert expected == pytest.approx(0.3 * large_cap_model.g / r * (1.0 - math.exp(-r * 10.0)), rel=0.01)


def test_absorbing_policy_uses_tail(large_cap_model):
    cfg = SimConfig(dt=0.01, horizon=5.0, n_paths=10, block_size=10)
    result = simulate_continuous(FixedStrategyPolicy(large_cap_model, Strategy.SA), cfg)
    assert result.mean == pytest.approx(large_cap_model.sa_value())
    assert result.stop_time_mean == 0.0


@pytest.mark.parametrize("alpha0", [0.35, 0.5, 0.7])
def test_policy_value_matches_simulation(large_cap_policy, alpha0):
    cfg = SimConfig(dt=1e-3, horizon=15.0, n_paths=20000, block_size=5000, alpha0=alpha0, master_seed=17)
    result = simulate_continuous(large_cap_policy, cfg)
    oracle = large_cap_policy.value_at(alpha0)
    assert abs(result.mean - oracle) <= 3.0 * result.std_error + 1e-12
    assert get_metrics().sim_paths == 20000


def test_halving_dt_agrees_within_sampling_error(large_cap_policy):
    base = dict(horizon=15.0, n_paths=10000, block_size=5000, alpha0=0.5, master_seed=5)
    coarse = simulate_continuous(large_cap_policy, SimConfig(dt=4e-3, **base))
    fine = simulate_continuous(large_cap_policy, SimConfig(dt=2e-3, **base))
    bound = 3.0 * math.hypot(coarse.std_error, fine.std_error)
    assert abs(coarse.mean - fine.mean) <= bound


def test_block_size_does_not_change_result(large_cap_policy):
    base = dict(dt=0.01, horizon=10.0, n_paths=4000, alpha0=0.45, master_seed=9)
    small = simulate_continuous(large_cap_policy, SimConfig(block_size=1000, **base))
    whole = simulate_continuous(large_cap_policy, SimConfig(block_size=4000, **base))
    assert small.mean == whole.mean
    assert small.std_error == whole.std_error
    assert small.stop_time_quantiles == whole.stop_time_quantiles


def test_discrete_paths_do_not_depend_on_blocks(two_period):
    schedule = two_period.fc_schedule()
    split = simulate_discrete(two_period, schedule, UniformR1(4.0), SimConfig(n_paths=3000, block_size=700))
    whole = simulate_discrete(two_period, schedule, UniformR1(4.0), SimConfig(n_paths=3000, block_size=3000))
    assert split.mean == whole.mean
    assert split.good_state_fraction == whole.good_state_fraction


def test_path_streams_are_keyed_by_path_index():
    first = PathStreams(3, 0, 5, 2)
    shifted = PathStreams(3, 2, 3, 2)
    assert np.array_equal(first.initial()[2:], shifted.initial())
    rows = np.arange(3)
    assert np.array_equal(first.period(0, rows + 2), shifted.period(0, rows))
    assert not np.array_equal(path_generator(3, 0).random(4), path_generator(4, 0).random(4))


def test_thread_count_does_not_change_result(large_cap_policy):
    base = dict(dt=0.01, horizon=10.0, n_paths=600, block_size=200, alpha0=0.45)
    single = simulate_continuous(large_cap_policy, SimConfig(threads=1, **base))
    pooled = simulate_continuous(large_cap_policy, SimConfig(threads=3, **base))
    assert single.mean == pooled.mean
    assert single.std_error == pooled.std_error


def test_trace_rows(large_cap_policy, tmp_path):
    trace = []
    cfg = SimConfig(dt=0.01, horizon=2.0, n_paths=20, block_size=20, alpha0=0.45, trace_paths=2)
    simulate_continuous(large_cap_policy, cfg, trace)
    assert trace
    assert {row["path_id"] for row in trace} <= {0, 1}
    assert {row["strategy"] for row in trace} <= {"PC", "FC", "SA"}
    write_trace(trace, tmp_path / "trace.csv")
    header = (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert header == "path_id,t,alpha,strategy,bonus,cost,reported,cash_flow"


def test_discrete_schedule_matches_profit(two_period):
    strategy, schedule, profit = two_period.optimal_strategy()
    cfg = SimConfig(n_paths=20000, block_size=5000, master_seed=11)
    result = simulate_discrete(two_period, schedule, UniformR1(4.0), cfg)
    assert abs(result.mean - profit) <= 3.0 * result.std_error
    assert result.good_state_fraction == pytest.approx(0.5, abs=0.02)


def test_discrete_safe_arm_is_deterministic(two_period):
    schedule = two_period.zero_schedule(Strategy.SA)
    result = simulate_discrete(two_period, schedule, UniformR1(4.0), SimConfig(n_paths=100, block_size=100))
    assert result.mean == pytest.approx(2.0 * 1.95)


def test_discrete_needs_finite_horizon(two_period):
    model = two_period.__class__(math.inf, 0.95, 2.0, 2.5, 2.0, two_period.costs)
    with pytest.raises(DomainError):
        simulate_discrete(model, model.fc_schedule(), UniformR1(4.0), SimConfig(n_paths=10))


def test_posterior_consistency(large_cap_model):
    frame = posterior_consistency(large_cap_model, 0.5, 0.05, [5, 20, 60], n_paths=50000, seed=3)
    assert list(frame.k) == [5, 20, 60]
    assert np.all(frame.n_paths > 20000)
    assert np.all(np.abs(frame.empirical - frame.posterior) < 0.01)
    assert np.all(frame.belief_gap < 1e-12)
    assert np.all(frame.posterior.diff().dropna() < 0.0)
    assert frame.posterior.iloc[0] == pytest.approx(bayes_update(0.5, large_cap_model.lam, 0.25))


def test_posterior_consistency_follows_the_policy(large_cap_policy, large_cap_model):
    # PC and FC periods report only when the cost is below the bonus
    frame = posterior_consistency(large_cap_model, 0.45, 0.01, [10, 40], n_paths=2000, seed=8, horizon=5.0,
                                  policy=large_cap_policy)
    assert np.all(frame.n_paths > 0)
    assert np.all(frame.belief_gap < 1e-12)


def test_posterior_consistency_needs_positive_checkpoints(large_cap_model):
    with pytest.raises(DomainError):
        posterior_consistency(large_cap_model, 0.5, 0.05, [0, 5], n_paths=10)
