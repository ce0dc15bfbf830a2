import math

import numpy as np
import pytest

from cost_model import CostDistribution
from discrete import (
    DiscreteModel, NumericQuadrature, RhoMix, UniformR1, Variant, discrete_summary, emax_oracle, sweep_r2,
)
from failure import DomainError, InconsistencyError, InvariantError
from strategy import Strategy


def infinite_model(r2=2.0, cbar=1.0):
    return DiscreteModel.from_law(math.inf, 0.95, r2, UniformR1(4.0), CostDistribution.uniform(cbar))


def quadratic_root(linear, const):
    # positive root of x^2 + linear*x - const
    return (-linear + math.sqrt(linear * linear + 4.0 * const)) / 2.0


# ---------- R1 laws ----------

def test_uniform_emax():
    law = UniformR1(4.0)
    assert law.mean() == 2.0
    assert law.emax(2.0) == pytest.approx(2.5)
    assert law.emax(1.0) == pytest.approx(2.125)
    assert law.emax(5.0) == 5.0


def test_rho_mix_closed_forms():
    assert RhoMix(2.0 / 3.0).emax(3.0) == pytest.approx(218.0 / 72.0, rel=1e-12)
    assert RhoMix(0.8).emax(3.0) == pytest.approx(3.0583333333, abs=1e-9)


def test_rho_mix_branches_meet():
    rho = 2.0 / 3.0
    below = 18.0 + (12.0 - 15.0 * rho) / (2.0 * (1.0 - rho)) + rho * (rho + 9.0) / (6.0 * (1.0 - rho))
    above = 58.0 / 3.0 + 13.0 * rho / 3.0 + 4.0 / (3.0 * rho)
    assert below == pytest.approx(above, rel=1e-12)


@pytest.mark.parametrize("rho", [0.3, 2.0 / 3.0, 0.8])
def test_rho_mix_quadrature_agrees(rho):
    law = RhoMix(rho)
    assert law.emax_quadrature(3.0) == pytest.approx(law.emax(3.0), abs=1e-9)


def test_tabulated_r1_matches_uniform():
    xs = np.linspace(0.0, 4.0, 9)
    law = NumericQuadrature(xs, xs / 4.0)
    assert law.mean() == pytest.approx(2.0, abs=1e-8)
    assert law.emax(2.0) == pytest.approx(2.5, abs=1e-8)
    assert emax_oracle(law, 1.0) == pytest.approx(2.125, abs=1e-8)


def test_emax_oracle_rejects_negative_r2():
    with pytest.raises(DomainError):
        emax_oracle(UniformR1(4.0), -1.0)


def test_rho_mix_emax_grows_with_rho():
    emax = [RhoMix(rho).emax(3.0) for rho in np.linspace(0.05, 0.95, 19)]
    assert np.all(np.diff(emax) > 0.0)


# ---------- Model invariants ----------

def test_model_invariants(unit_costs):
    with pytest.raises(InvariantError):
        DiscreteModel(0, 0.95, 2.0, 2.5, 2.0, unit_costs)
    with pytest.raises(InvariantError):
        DiscreteModel(2, 1.0, 2.0, 2.5, 2.0, unit_costs)
    with pytest.raises(InvariantError):
        DiscreteModel(2, 0.95, 2.0, 1.5, 2.0, unit_costs)


# ---------- Two-period schedule ----------

def test_two_period_schedule(two_period):
    assert two_period.M == pytest.approx(0.5)
    assert two_period.N == pytest.approx(0.5)
    fc = two_period.fc_schedule()
    assert fc.strategy is Strategy.FC
    assert fc.bonuses == pytest.approx((0.2375, 0.0))


def test_two_period_optimum(two_period):
    strategy, schedule, profit = two_period.optimal_strategy()
    assert strategy is Strategy.FC
    assert schedule.bonuses == pytest.approx((0.2375, 0.0))
    assert profit == pytest.approx(3.95640625, rel=1e-12)
    assert two_period.expected_profit(strategy, schedule) == pytest.approx(profit, rel=1e-12)


def test_pc_ties_fc_when_safe_equals_mean(two_period):
    pc = two_period.pc_schedule()
    fc = two_period.fc_schedule()
    assert pc.strategy is Strategy.PC
    assert two_period.strategy_profit(Strategy.PC, pc) == pytest.approx(
        two_period.strategy_profit(Strategy.FC, fc), rel=1e-12)


def test_single_period_pc_profit(unit_costs):
    model = DiscreteModel.from_law(1, 0.95, 1.0, UniformR1(4.0), unit_costs)
    assert model.emax == pytest.approx(2.125)
    pc = model.pc_schedule()
    assert pc.strategy is Strategy.PC
    assert pc.first == pytest.approx(0.5)
    assert model.strategy_profit(Strategy.PC, pc) == pytest.approx(1.25)
    assert model.expected_profit(Strategy.PC, pc) == pytest.approx(1.25)
    # A single FC period pays no bonus
    assert model.fc_schedule().strategy is Strategy.NB


def test_pc_interior_clamping(unit_costs):
    model = DiscreteModel.from_law(3, 0.95, 2.5, UniformR1(4.0), unit_costs)
    pc = model.pc_schedule()
    n = model.N
    d2 = 0.95 * (-0.5 + n)
    d1 = 0.95 * (d2 + n) / 2.0
    assert model.terminal_pc_bonus() == pytest.approx(-0.5)
    assert pc.strategy is Strategy.PC
    assert pc.interior_clamped
    assert pc.first_raw == pytest.approx(d1, rel=1e-12)
    assert pc.bonuses[1:] == (0.0, 0.0)


def test_schedule_label_must_match(two_period):
    with pytest.raises(InconsistencyError):
        two_period.strategy_profit(Strategy.PC, two_period.fc_schedule())


def test_three_period_fc_profit_by_forward_enumeration(unit_costs):
    model = DiscreteModel.from_law(3, 0.95, 2.0, UniformR1(4.0), unit_costs)
    fc = model.fc_schedule()
    assert fc.strategy is Strategy.FC
    assert fc.bonuses == pytest.approx((0.43633203125, 0.2375, 0.0), rel=1e-12)
    # Unit uniform costs: a report arrives with probability b and costs b when it does
    total, unrevealed = 0.0, 1.0
    for t, b in enumerate(fc.bonuses):
        total += 0.95 ** t * (unrevealed * (2.0 - b * b) + (1.0 - unrevealed) * 2.5)
        unrevealed *= 1.0 - b
    assert model.strategy_profit(Strategy.FC, fc) == pytest.approx(total, rel=1e-12)
    assert model.expected_profit(Strategy.FC, fc) == pytest.approx(total, rel=1e-12)


# ---------- Infinite horizon ----------

def test_fixed_points_match_closed_form():
    model = infinite_model()
    expected = quadratic_root(2.0 * (1.0 / 0.95 - 1.0), 0.5)
    assert model.fixed_point(Variant.M) == pytest.approx(expected, abs=1e-10)
    assert model.fixed_point(Variant.N) == pytest.approx(expected, abs=1e-10)
    assert model.gamma_iterate_fixed_point(Variant.M) == pytest.approx(expected, abs=1e-9)


def test_b_n_star_value():
    assert infinite_model().fixed_point(Variant.N) == pytest.approx(0.656431, abs=1e-5)


def test_infinite_expected_profit_identity():
    model = infinite_model()
    for schedule in (model.fc_schedule(), model.pc_schedule()):
        assert model.expected_profit(schedule.strategy, schedule) == pytest.approx(
            model.strategy_profit(schedule.strategy, schedule), rel=1e-9)


def test_no_ir_assumption_flags():
    assert infinite_model().no_ir_assumption()
    # With R2 far above the mean, Psi(cbar) turns positive
    assert not infinite_model(r2=3.2, cbar=1.1).no_ir_assumption()


def test_pc_collapses_to_sa_when_n_negative():
    model = infinite_model(r2=3.3, cbar=1.1)
    assert model.N < 0.0
    assert model.pc_schedule().strategy is Strategy.SA


def test_gamma_climbs_toward_its_fixed_point():
    rng = np.random.default_rng(31)
    used = 0
    for _ in range(200):
        upper = rng.uniform(2.0, 6.0)
        law = UniformR1(upper)
        model = DiscreteModel.from_law(math.inf, rng.uniform(0.5, 0.99), rng.uniform(0.5, 0.9 * upper), law,
                                       CostDistribution.uniform(rng.uniform(0.5, 3.0)))
        b_star = model.fixed_point(Variant.M)
        if b_star is None or b_star <= 1e-6:
            continue
        used += 1
        for x in np.linspace(0.01 * b_star, 0.99 * b_star, 25):
            step = model.gamma_step(x, Variant.M)
            assert x < step < b_star
    assert used >= 50


# ---------- Sweeps ----------

def test_sweep_fc_equals_pc_at_mean():
    model = infinite_model(cbar=1.1)
    frame = sweep_r2(model, [1.5, 2.0, 2.5], UniformR1(4.0))
    row = frame[frame.r2 == 2.0].iloc[0]
    assert row.pi_fc == pytest.approx(row.pi_pc, rel=1e-10)
    assert row.winner == "FC"


def test_sweep_pc_to_sa_switch():
    model = infinite_model(cbar=1.1)
    frame = sweep_r2(model, [3.2, 3.3], UniformR1(4.0))
    assert list(frame.winner) == ["PC", "SA"]


def test_sweep_grid_must_increase():
    with pytest.raises(DomainError):
        sweep_r2(infinite_model(), [2.0, 1.0], UniformR1(4.0))


def test_discrete_summary(two_period):
    summary = discrete_summary(two_period)
    assert summary["strategy"] == "FC"
    assert summary["horizon"] == 2
    assert summary["no_ir_assumption"]
    assert summary["expected_profit"] == pytest.approx(summary["profit"])


def test_fc_minus_pc_crosses_zero_once_at_the_mean():
    grid = np.linspace(1.1, 3.1, 201)
    frame = sweep_r2(infinite_model(cbar=1.1), grid, UniformR1(4.0))
    gap = (frame.pi_fc - frame.pi_pc).to_numpy()
    decided = np.abs(gap) > 1e-8
    signs = np.sign(gap[decided])
    r2 = grid[decided]
    flips = np.nonzero(np.diff(signs))[0]
    assert len(flips) == 1
    assert signs[0] > 0.0 and signs[-1] < 0.0
    assert 1.99 - 1e-9 <= r2[flips[0]] and r2[flips[0] + 1] <= 2.01 + 1e-9
