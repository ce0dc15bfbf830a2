"""
Perfect-learning model: bonus recursions, fixed points, strategy profits and
the strategy choice over the safe-arm utility R2
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from cost_model import CostDistribution
from failure import DomainError, InconsistencyError, InvariantError
from strategy import TIE_ORDER, Strategy
from utils import bisect_root, discount_factor_sum

logger = logging.getLogger(__name__)

FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAX_STEPS = 10 ** 6
TIE_TOL = 1e-12


class Variant(Enum):
    """Which constant enters psi: M = Emax - ER1, or N = M + (ER1 - R2)/r"""
    M = "M"
    N = "N"


# ---------- Laws of the risky utility R1 ----------

@dataclass(frozen=True)
class UniformR1:
    """R1 ~ U[0, upper]"""
    upper: float

    def __post_init__(self):
        if not self.upper > 0.0:
            raise DomainError(f"uniform R1 upper bound must be positive, got {self.upper}")

    def mean(self) -> float:
        return self.upper / 2.0

    def emax(self, r2: float) -> float:
        x = self.upper
        if r2 >= x:
            return r2
        if r2 <= 0.0:
            return self.mean()
        # (X^2 + R2^2) / (2X); (X^2 + 4)/(2X) at R2 = 2
        return (x * x + r2 * r2) / (2.0 * x)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.uniform(0.0, self.upper, size)


@dataclass(frozen=True)
class RhoMix:
    """R1 = rho*X + (1 - rho)*Y with X ~ U[0, 4] and Y ~ U[1, 3]"""
    rho: float

    def __post_init__(self):
        if not (0.0 < self.rho < 1.0):
            raise DomainError(f"rho must lie in (0, 1), got {self.rho}")

    def mean(self) -> float:
        return 2.0

    def emax(self, r2: float) -> float:
        rho = self.rho
        if abs(r2 - 3.0) <= 1e-12:
            if rho < 2.0 / 3.0:
                total = 18.0 + (12.0 - 15.0 * rho) / (2.0 * (1.0 - rho)) + rho * (rho + 9.0) / (6.0 * (1.0 - rho))
            else:
                total = 58.0 / 3.0 + 13.0 * rho / 3.0 + 4.0 / (3.0 * rho)
            return total / 8.0
        return self.emax_quadrature(r2)

    def emax_quadrature(self, r2: float) -> float:
        """
        E max{R1, R2} with the inner integral over Y in closed form and
        adaptive quadrature over X split at the kinks.
        """
        rho = self.rho

        def inner(x: float) -> float:
            # E_Y max{rho x + (1 - rho) Y, r2}, Y ~ U[1, 3]
            y_star = min(max((r2 - rho * x) / (1.0 - rho), 1.0), 3.0)
            flat = r2 * (y_star - 1.0)
            risky = rho * x * (3.0 - y_star) + (1.0 - rho) * (9.0 - y_star ** 2) / 2.0
            return (flat + risky) / 2.0

        kinks = sorted(k for k in ((r2 - (1.0 - rho)) / rho, (r2 - 3.0 * (1.0 - rho)) / rho) if 0.0 < k < 4.0)
        value, _ = quad(inner, 0.0, 4.0, points=kinks or None, epsabs=1e-12, epsrel=1e-12, limit=200)
        return value / 4.0

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        x = rng.uniform(0.0, 4.0, size)
        y = rng.uniform(1.0, 3.0, size)
        return self.rho * x + (1.0 - self.rho) * y


class NumericQuadrature:
    """R1 with a tabulated CDF on [lo, hi], monotone cubic interpolation"""

    def __init__(self, xs: Sequence[float], cdf: Sequence[float]):
        xs = np.asarray(xs, dtype=float)
        cdf = np.asarray(cdf, dtype=float)
        if xs.size < 3 or xs.shape != cdf.shape:
            raise DomainError("R1 table needs two equal-length columns with at least 3 rows")
        if np.any(np.diff(xs) <= 0.0) or np.any(np.diff(cdf) < 0.0):
            raise DomainError("R1 table must have increasing x and non-decreasing F")
        if abs(cdf[0]) > 1e-9 or abs(cdf[-1] - 1.0) > 1e-9:
            raise DomainError("R1 table must run from F = 0 to F = 1")
        self.lo, self.hi = float(xs[0]), float(xs[-1])
        self._cdf = PchipInterpolator(xs, cdf, extrapolate=False)
        self._inverse = (cdf, xs)

    @classmethod
    def from_csv(cls, path) -> "NumericQuadrature":
        frame = pd.read_csv(path)
        return cls(frame.iloc[:, 0].to_numpy(), frame.iloc[:, 1].to_numpy())

    def _survival(self, x: float) -> float:
        return 1.0 - float(np.clip(self._cdf(x), 0.0, 1.0))

    def mean(self) -> float:
        value, _ = quad(self._survival, self.lo, self.hi, epsabs=1e-10, limit=200)
        return self.lo + value

    def emax(self, r2: float) -> float:
        if r2 >= self.hi:
            return r2
        start = max(r2, self.lo)
        value, _ = quad(self._survival, start, self.hi, epsabs=1e-10, limit=200)
        return start + value

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        probs, xs = self._inverse
        return np.interp(rng.random(size), probs, xs)


def emax_oracle(law, r2: float) -> float:
    """
    E max{R1, R2} for an R1 law (UniformR1, RhoMix or NumericQuadrature).
    """
    if r2 < 0.0:
        raise DomainError(f"R2 must be non-negative, got {r2}")
    return law.emax(r2)


# ---------- Schedules ----------

@dataclass(frozen=True)
class BonusSchedule:
    """
    Per-agent bonuses b_1..b_T, or a single constant for an infinite horizon.
    An IR schedule pays the cost cap to the first agent and nothing after.
    """
    bonuses: Tuple[float, ...]
    strategy: Strategy
    infinite: bool = False
    first_raw: float = 0.0  # unclamped first iterate, before any clamping
    interior_clamped: bool = False  # a negative iterate other than b_T was clamped

    def bonus_at(self, t: int) -> float:
        """Bonus offered to agent t (1-based)"""
        if self.strategy is Strategy.IR:
            return self.bonuses[0] if t == 1 else 0.0
        if self.infinite:
            return self.bonuses[0]
        return self.bonuses[t - 1]

    @property
    def first(self) -> float:
        return self.bonuses[0]


# ---------- Model ----------

@dataclass(frozen=True)
class DiscreteModel:
    """
    Perfect-learning primitives: horizon T (int or math.inf), discount r,
    E R1, E max{R1, R2}, R2 and the reporting-cost law.
    """
    horizon: float
    discount: float
    er1: float
    emax: float
    r2: float
    costs: CostDistribution

    def __post_init__(self):
        if not (self.horizon >= 1 and (math.isinf(self.horizon) or float(self.horizon).is_integer())):
            raise InvariantError(f"horizon must be a positive integer or inf, got {self.horizon}")
        if not (0.0 < self.discount < 1.0):
            raise InvariantError(f"discount r must lie in (0, 1), got {self.discount}")
        if self.r2 < 0.0:
            raise InvariantError(f"R2 must be non-negative, got {self.r2}")
        if self.emax < max(self.er1, self.r2) - 1e-12:
            raise InvariantError(
                f"E max{{R1, R2}} = {self.emax} below max(E R1, R2) = {max(self.er1, self.r2)}"
            )

    @classmethod
    def from_law(cls, horizon: float, discount: float, r2: float, law, costs: CostDistribution) -> "DiscreteModel":
        return cls(horizon, discount, law.mean(), emax_oracle(law, r2), r2, costs)

    # ---------- Derived constants ----------

    @property
    def M(self) -> float:
        return self.emax - self.er1

    @property
    def N(self) -> float:
        return self.M + (self.er1 - self.r2) / self.discount

    @property
    def infinite(self) -> bool:
        return math.isinf(self.horizon)

    @property
    def factor(self) -> float:
        return discount_factor_sum(self.discount, self.horizon)

    def _constant(self, variant: Variant) -> float:
        return self.M if variant is Variant.M else self.N

    # ---------- Recursion pieces ----------

    def psi(self, x: float, variant: Variant = Variant.M) -> float:
        """beta(x) + K - H^2/h on [0, cbar], x + K elsewhere (K = M or N)"""
        const = self._constant(variant)
        if 0.0 <= x <= self.costs.cbar:
            return self.costs.virtual_value(x) + const - self.costs.info_rent(x)
        return x + const

    def gamma_step(self, b_next: float, variant: Variant = Variant.M) -> float:
        """
        beta^-1(r * psi(b_next)). A negative r*psi is returned as is so the
        schedule builder can carry it through the identity branch.
        """
        target = self.discount * self.psi(b_next, variant)
        if target < 0.0:
            return target
        return self.costs.virtual_inverse(target)

    def big_psi(self, x: float) -> float:
        """(1 - 1/r) beta(x) + M - H^2/h; decreasing, root is b*"""
        r = self.discount
        return (1.0 - 1.0 / r) * self.costs.virtual_value(x) + self.M - self.costs.info_rent(x)

    def big_psi_n(self, x: float) -> float:
        """(1/r - 1) beta(x) + H^2/h - N; increasing, root is b_N*"""
        r = self.discount
        return (1.0 / r - 1.0) * self.costs.virtual_value(x) + self.costs.info_rent(x) - self.N

    def fixed_point(self, variant: Variant = Variant.M) -> Optional[float]:
        """
        b* (variant M) or b_N* (variant N) by bisection on [0, cbar].
        None when N <= 0 or when the root lies beyond cbar.
        """
        cbar = self.costs.cbar
        if variant is Variant.M:
            if self.M <= 0.0:
                return 0.0
            if self.big_psi(cbar) > 0.0:
                return None
            return bisect_root(self.big_psi, 0.0, cbar, xtol=FIXED_POINT_TOL, what="b*")
        if self.N <= 0.0:
            return None
        if self.big_psi_n(cbar) < 0.0:
            return None
        return bisect_root(self.big_psi_n, 0.0, cbar, xtol=FIXED_POINT_TOL, what="b_N*")

    def gamma_iterate_fixed_point(self, variant: Variant = Variant.M) -> Optional[float]:
        """
        Cross-check of fixed_point by iterating Gamma from 0 until the
        update falls below 1e-12 (or 10^6 steps). None if the iterates
        leave [0, cbar] or never turn positive.
        """
        b = 0.0
        for _ in range(FIXED_POINT_MAX_STEPS):
            nxt = self.gamma_step(b, variant)
            if nxt > self.costs.cbar:
                return None
            nxt = max(nxt, 0.0)
            if abs(nxt - b) < FIXED_POINT_TOL:
                return nxt if nxt > 0.0 or variant is Variant.M else None
            b = nxt
        logger.warning("Gamma iteration did not settle within %d steps", FIXED_POINT_MAX_STEPS)
        return b

    def no_ir_assumption(self) -> bool:
        """Psi(cbar) < 0 and Psi_N(cbar) < 0: immediate revelation can be ignored"""
        cbar = self.costs.cbar
        return self.big_psi(cbar) < 0.0 and -self.big_psi_n(cbar) < 0.0

    # ---------- Schedules ----------

    def _ir_schedule(self, first_raw: float) -> BonusSchedule:
        length = 1 if self.infinite else int(self.horizon)
        bonuses = (self.costs.cbar,) + (0.0,) * (length - 1)
        return BonusSchedule(bonuses, Strategy.IR, self.infinite, first_raw)

    def fc_schedule(self) -> BonusSchedule:
        """Full-coverage schedule b_T = 0, b_t = Gamma^(T-t)(0)"""
        if self.infinite:
            b_star = self.fixed_point(Variant.M)
            if b_star is None:
                return self._ir_schedule(math.inf)
            return BonusSchedule((b_star,), Strategy.FC, True, b_star)
        T = int(self.horizon)
        if T == 1:
            return BonusSchedule((0.0,), Strategy.NB, False, 0.0)
        bonuses = [0.0] * T
        for t in range(T - 2, -1, -1):
            bonuses[t] = self.gamma_step(bonuses[t + 1], Variant.M)
        if max(bonuses) > self.costs.cbar:
            return self._ir_schedule(bonuses[0])
        return BonusSchedule(tuple(bonuses), Strategy.FC, False, bonuses[0])

    def terminal_pc_bonus(self) -> float:
        """d_T with beta(d_T) = ER1 - R2; negative values via the identity branch"""
        target = self.er1 - self.r2
        if target < 0.0:
            return target
        return self.costs.virtual_inverse(target)

    def pc_schedule(self) -> BonusSchedule:
        """
        Partial-coverage schedule from d_T through Gamma_N with the extended
        branches; negative iterates are clamped to 0 only in the result.
        """
        cbar = self.costs.cbar
        if self.infinite:
            if self.N <= 0.0:
                return BonusSchedule((0.0,), Strategy.SA, True, 0.0)
            b_n = self.fixed_point(Variant.N)
            if b_n is None:
                return self._ir_schedule(math.inf)
            return BonusSchedule((b_n,), Strategy.PC, True, b_n)
        T = int(self.horizon)
        raw = [0.0] * T
        raw[-1] = self.terminal_pc_bonus()
        for t in range(T - 2, -1, -1):
            raw[t] = self.gamma_step(raw[t + 1], Variant.N)
        first = raw[0]
        if first <= 0.0:
            return BonusSchedule((0.0,) * T, Strategy.SA, False, first)
        if first >= cbar:
            return self._ir_schedule(first)
        interior_clamped = any(d < 0.0 for d in raw[:-1])
        if interior_clamped:
            logger.info("PC schedule clamped negative interior iterates (T=%d, R2=%.6g)", T, self.r2)
        bonuses = tuple(max(d, 0.0) for d in raw)
        return BonusSchedule(bonuses, Strategy.PC, False, first, interior_clamped)

    def zero_schedule(self, strategy: Strategy) -> BonusSchedule:
        length = 1 if self.infinite else int(self.horizon)
        return BonusSchedule((0.0,) * length, strategy, self.infinite, 0.0)

    # ---------- Profits ----------

    def strategy_profit(self, strategy: Strategy, schedule: BonusSchedule) -> float:
        """Total discounted profit of a strategy under its schedule"""
        if schedule.strategy is not strategy:
            raise InconsistencyError(
                f"schedule is labeled {schedule.strategy.value}, requested {strategy.value}"
            )
        factor = self.factor
        if strategy is Strategy.FC:
            return self.emax * factor - self.psi(schedule.first, Variant.M)
        if strategy is Strategy.PC:
            # psi, not psi_N, evaluated at the first iterate
            return self.emax * factor - self.psi(schedule.first_raw, Variant.M)
        if strategy is Strategy.SA:
            return self.r2 * factor
        if strategy is Strategy.NB:
            return self.er1 * factor
        return self.emax * factor - self.M - self.costs.cbar

    def expected_profit(self, strategy: Strategy, schedule: BonusSchedule) -> float:
        """
        Exact expectation over report / no-report events by backward
        recursion; an independent check of strategy_profit.
        """
        r, er1, r2, emax = self.discount, self.er1, self.r2, self.emax
        def cdf(b: float) -> float:
            return self.costs.eval(min(max(b, 0.0), self.costs.cbar))[0]

        if self.infinite:
            b = schedule.bonus_at(1)
            revealed = r * emax / (1.0 - r)
            if strategy is Strategy.SA:
                return r2 / (1.0 - r)
            if strategy is Strategy.NB:
                return er1 / (1.0 - r)
            if strategy is Strategy.IR:
                return er1 - b + revealed
            h = cdf(b)
            if strategy is Strategy.FC:
                return (er1 + h * (revealed - b)) / (1.0 - (1.0 - h) * r)
            return (h * (er1 - b + revealed) + (1.0 - h) * r2) / (1.0 - (1.0 - h) * r)

        T = int(self.horizon)
        value = 0.0
        for t in range(T, 0, -1):
            revealed = r * emax * discount_factor_sum(r, T - t)
            b = schedule.bonus_at(t)
            if strategy in (Strategy.FC, Strategy.NB, Strategy.IR):
                h = cdf(b) if b > 0.0 else 0.0
                value = er1 + h * (revealed - b) + (1.0 - h) * r * value
            elif strategy is Strategy.PC:
                h = cdf(b) if b > 0.0 else 0.0
                value = h * (er1 - b + revealed) + (1.0 - h) * (r2 + r * value)
            else:
                value = r2 + r * value
        return value

    def candidates(self) -> List[Tuple[Strategy, BonusSchedule]]:
        """All admissible (strategy, schedule) pairs"""
        pairs = []
        fc = self.fc_schedule()
        pc = self.pc_schedule()
        pairs.append((fc.strategy, fc))
        pairs.append((pc.strategy, pc))
        pairs.append((Strategy.NB, self.zero_schedule(Strategy.NB)))
        pairs.append((Strategy.SA, self.zero_schedule(Strategy.SA)))
        if not self.no_ir_assumption():
            pairs.append((Strategy.IR, self._ir_schedule(math.nan)))
        return pairs

    def optimal_strategy(self) -> Tuple[Strategy, BonusSchedule, float]:
        """
        Argmax over admissible strategies; profits within 1e-12 are ties,
        broken by FC > PC > NB > SA.
        """
        best = None
        scored = [(s, sched, self.strategy_profit(s, sched)) for s, sched in self.candidates()]
        scored.sort(key=lambda item: TIE_ORDER.index(item[0]))
        for strategy, schedule, profit in scored:
            if best is None or profit > best[2] + TIE_TOL * (1.0 + abs(best[2])):
                best = (strategy, schedule, profit)
        return best

    def summary(self) -> dict:
        b_star = self.fixed_point(Variant.M)
        b_n_star = self.fixed_point(Variant.N)
        return {
            "horizon": "inf" if self.infinite else int(self.horizon),
            "discount": self.discount,
            "er1": self.er1,
            "emax": self.emax,
            "r2": self.r2,
            "M": self.M,
            "N": self.N,
            "b_star": b_star,
            "b_n_star": b_n_star,
            "psi_at_cbar": self.big_psi(self.costs.cbar),
            "psi_n_at_cbar": -self.big_psi_n(self.costs.cbar),
            "no_ir_assumption": self.no_ir_assumption(),
        }


def sweep_r2(model: DiscreteModel, r2_grid: Sequence[float], law) -> pd.DataFrame:
    """
    Profit of every strategy and the winner on an increasing R2 grid;
    E max is recomputed from the R1 law at each point.
    """
    grid = list(r2_grid)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("R2 grid must be strictly increasing")
    rows = []
    for r2 in grid:
        point = replace(model, r2=r2, emax=emax_oracle(law, r2), er1=law.mean())
        fc = point.fc_schedule()
        pc = point.pc_schedule()
        winner, _, _ = point.optimal_strategy()
        rows.append({
            "r2": r2,
            "pi_fc": point.strategy_profit(fc.strategy, fc),
            "pi_pc": point.strategy_profit(pc.strategy, pc),
            "pi_sa": point.r2 * point.factor,
            "pi_nb": point.er1 * point.factor,
            "pi_ir": point.emax * point.factor - point.M - point.costs.cbar,
            "winner": winner.value,
        })
    logger.info("Swept %d R2 values from %.6g to %.6g", len(grid), grid[0], grid[-1])
    return pd.DataFrame(rows, columns=["r2", "pi_fc", "pi_pc", "pi_sa", "pi_nb", "pi_ir", "winner"])


def discrete_summary(model: DiscreteModel) -> dict:
    """Fixed points, assumption flags, both schedules and the chosen strategy"""
    summary = model.summary()
    fc = model.fc_schedule()
    pc = model.pc_schedule()
    strategy, schedule, profit = model.optimal_strategy()
    summary.update({
        "fc_label": fc.strategy.value,
        "fc_bonuses": list(fc.bonuses),
        "pc_label": pc.strategy.value,
        "pc_bonuses": list(pc.bonuses),
        "pc_first_raw": pc.first_raw,
        "pc_interior_clamped": pc.interior_clamped,
        "strategy": strategy.value,
        "bonuses": list(schedule.bonuses),
        "profit": profit,
        "expected_profit": model.expected_profit(strategy, schedule),
        "costs": model.costs.describe(),
    })
    return summary
