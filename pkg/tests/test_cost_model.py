import numpy as np
import pytest

from cost_model import CostDistribution, CostKind
from failure import ArtifactIOError, DomainError, InvariantError, NegativeInputError, RangeError


@pytest.fixture
def linear_table():
    xs = np.linspace(0.0, 1.0, 11)
    return CostDistribution.from_table(xs, xs)


def test_uniform_closed_forms(unit_costs):
    assert unit_costs.eval(0.25) == (0.25, 1.0)
    assert unit_costs.virtual_value(0.3) == pytest.approx(0.6)
    assert unit_costs.info_rent(0.5) == pytest.approx(0.25)
    assert unit_costs.truncated_cost_mass(0.5) == pytest.approx(0.125)
    assert unit_costs.mean() == pytest.approx(0.5)


def test_uniform_scales_with_cap():
    costs = CostDistribution.uniform(2.0)
    cdf, pdf = costs.eval(1.0)
    assert cdf == pytest.approx(0.5)
    assert pdf == pytest.approx(0.5)
    assert costs.info_rent(2.0) == pytest.approx(2.0)
    assert costs.info_rent_inverse(0.5) == pytest.approx(1.0)


def test_virtual_inverse_branches(unit_costs):
    assert unit_costs.virtual_inverse(0.6) == pytest.approx(0.3)
    # Past beta(cbar) = 2 the identity rule applies
    assert unit_costs.virtual_inverse(3.0) == 3.0
    with pytest.raises(NegativeInputError):
        unit_costs.virtual_inverse(-0.1)


def test_info_rent_inverse_above_cap(unit_costs):
    assert unit_costs.info_rent_inverse(1.0) == pytest.approx(1.0)
    with pytest.raises(RangeError):
        unit_costs.info_rent_inverse(1.5)


def test_support_is_checked(unit_costs):
    with pytest.raises(DomainError):
        unit_costs.eval(1.5)
    with pytest.raises(DomainError):
        unit_costs.virtual_value(-0.5)


def test_reporting_surplus_and_inverse(unit_costs):
    assert unit_costs.reporting_surplus(0.5) == pytest.approx(0.125)
    assert unit_costs.reporting_surplus_inverse(0.125) == pytest.approx(0.5)
    # Linear past the cap: C - E[c]
    assert unit_costs.reporting_surplus(1.3) == pytest.approx(0.8)
    assert unit_costs.reporting_surplus_inverse(0.8) == pytest.approx(1.3)
    assert unit_costs.reporting_surplus_inverse(0.0) == 0.0


def test_tabulated_law_matches_uniform(linear_table, unit_costs):
    assert linear_table.kind is CostKind.TABULATED
    for x in (0.1, 0.35, 0.8):
        assert linear_table.virtual_value(x) == pytest.approx(unit_costs.virtual_value(x), abs=1e-9)
        assert linear_table.info_rent(x) == pytest.approx(unit_costs.info_rent(x), abs=1e-9)
    assert linear_table.virtual_inverse(0.6) == pytest.approx(0.3, abs=1e-9)
    assert linear_table.info_rent_inverse(0.25) == pytest.approx(0.5, abs=1e-9)
    assert linear_table.truncated_cost_mass(0.5) == pytest.approx(0.125, abs=1e-9)
    assert linear_table.reporting_surplus_inverse(0.125) == pytest.approx(0.5, abs=1e-8)


@pytest.mark.parametrize("xs, hs", [
    ([0.0, 0.5, 0.4, 1.0], [0.0, 0.3, 0.6, 1.0]),
    ([0.0, 0.5, 1.0], [0.0, 0.6, 0.6]),
    ([0.0, 0.5, 1.0], [0.0, 0.5, 0.9]),
    ([0.1, 0.5, 1.0], [0.0, 0.5, 1.0]),
])
def test_bad_tables_are_rejected(xs, hs):
    with pytest.raises(InvariantError):
        CostDistribution.from_table(xs, hs)


def test_nonpositive_cap_is_rejected():
    with pytest.raises(InvariantError):
        CostDistribution.uniform(0.0)


def test_csv_round_trip(tmp_path):
    path = tmp_path / "costs.csv"
    path.write_text("x,H\n0,0\n0.5,0.5\n1,1\n")
    costs = CostDistribution.from_csv(path)
    assert costs.cbar == 1.0
    assert costs.eval(0.25)[0] == pytest.approx(0.25, abs=1e-9)


def test_missing_csv(tmp_path):
    with pytest.raises(ArtifactIOError):
        CostDistribution.from_csv(tmp_path / "missing.csv")


def test_sampling_stays_on_support(linear_table):
    rng = np.random.default_rng(7)
    draws = linear_table.sample(rng, 5000)
    assert draws.min() >= 0.0
    assert draws.max() <= 1.0
    assert draws.mean() == pytest.approx(0.5, abs=0.02)
