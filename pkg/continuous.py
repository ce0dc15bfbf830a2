"""
Exponential good-news bandit monopolist: value-function ODEs with smooth
pasting, switching cutoffs, naive single-strategy sellers and the Immediate
Revelation regime for a small cost cap.
"""

import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.interpolate import CubicHermiteSpline

from config import DEFAULT_STORE_MARGIN, DEFAULT_STORE_TOP, SolverSettings
from cost_model import CostDistribution
from failure import DomainError, InvariantError, NonTerminationError, RegimeError, SolverError
from marching import Marcher, Segment
from metrics import get_metrics
from strategy import Strategy
from utils import bisect_root

logger = logging.getLogger(__name__)

# Integer codes used by the vectorised lookups in the simulator
REGION_CODES = {Strategy.SA: 0, Strategy.PC: 1, Strategy.IR: 2, Strategy.FC: 3, Strategy.NB: 4}
CODE_REGIONS = {code: strategy for strategy, code in REGION_CODES.items()}
# s within this relative distance of g counts as s = g
RISKY_MARGIN = 1e-12


@dataclass(frozen=True)
class ContinuousModel:
    """
    Primitives r, lambda, z, s and the reporting-cost law; g = lambda * z.
    """
    discount_rate: float
    arrival_rate: float
    lump_value: float
    safe_flow: float
    costs: CostDistribution
    assume_large_cbar: bool = False

    def __post_init__(self):
        for name in ("discount_rate", "arrival_rate", "lump_value"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise InvariantError(f"{name} must be positive and finite, got {value}")
        if not (0.0 < self.safe_flow < self.g * (1.0 - RISKY_MARGIN)):
            raise InvariantError(
                f"g > s > 0 violated: g = lambda*z = {self.g:.6g}, s = {self.safe_flow:.6g}"
            )

    @classmethod
    def with_share(cls, discount_rate: float, arrival_rate: float, lump_value: float,
                   share: float, costs: CostDistribution, assume_large_cbar: bool = False):
        """Model with s = share * g"""
        return cls(discount_rate, arrival_rate, lump_value,
                   share * arrival_rate * lump_value, costs, assume_large_cbar)

    # ---------- Shorthands ----------

    @property
    def r(self) -> float:
        return self.discount_rate

    @property
    def lam(self) -> float:
        return self.arrival_rate

    @property
    def s(self) -> float:
        return self.safe_flow

    @property
    def g(self) -> float:
        return self.arrival_rate * self.lump_value

    @property
    def cbar(self) -> float:
        return self.costs.cbar

    @property
    def info_cap(self) -> float:
        return self.costs.info_rent(self.costs.cbar)

    @property
    def ir_threshold(self) -> float:
        return (self.lam / self.r + 1.0) * (self.g - self.s)

    @property
    def ir_admissible(self) -> bool:
        """True when the cost cap never binds and solve_policy applies"""
        return self.assume_large_cbar or self.cbar > self.ir_threshold

    def sa_value(self) -> float:
        return self.s / self.r

    def nb_value(self, alpha):
        return alpha * self.g / self.r

    # ---------- Closed-form cutoffs ----------

    def cutoff_sa_pc(self) -> float:
        r, lam, g, s = self.r, self.lam, self.g, self.s
        return r * s / (lam * (g - s) + r * g)

    def cutoff_pc_fc(self) -> float:
        return self.s / self.g

    def cutoff_ir(self) -> float:
        """Stopping belief of a seller restricted to SA or immediate revelation"""
        r, lam, g, s = self.r, self.lam, self.g, self.s
        return r * (self.cbar + s) / (lam * (g - s) + r * g)

    # ---------- Right-hand sides ----------

    def denom(self, alpha: float) -> float:
        return (alpha * alpha - alpha) * self.lam

    def _bonus(self, wedge: float) -> float:
        return self.costs.info_rent_inverse(min(max(wedge, 0.0), self.info_cap))

    def pc_bonus(self, alpha: float, value: float) -> float:
        return self._bonus(self.r * value - self.s)

    def fc_bonus(self, alpha: float, value: float) -> float:
        return self._bonus(self.r * value - alpha * self.g)

    def pc_rhs(self, alpha: float, u: float) -> float:
        b = self.pc_bonus(alpha, u)
        lam, g, s = self.lam, self.g, self.s
        num = self.costs.virtual_value(b) - alpha * g + s - alpha * lam * g / self.r + lam * alpha * u
        return num / self.denom(alpha)

    def fc_rhs(self, alpha: float, v: float) -> float:
        b = self.fc_bonus(alpha, v)
        lam = self.lam
        num = self.costs.virtual_value(b) + alpha * lam * v - alpha * lam * self.g / self.r
        return num / self.denom(alpha)

    def ir_rhs(self, alpha: float, y: float) -> float:
        r, lam, g = self.r, self.lam, self.g
        num = r * y - alpha * g * (1.0 + lam / r) + self.cbar + alpha * lam * y
        return num / self.denom(alpha)

    def describe(self) -> dict:
        return {
            "discount_rate": self.r,
            "arrival_rate": self.lam,
            "lump_value": self.lump_value,
            "safe_flow": self.s,
            "g": self.g,
            "costs": self.costs.describe(),
            "ir_threshold": self.ir_threshold,
            "ir_admissible": self.ir_admissible,
            "assume_large_cbar": self.assume_large_cbar,
        }


@dataclass(frozen=True)
class ValueCurve:
    """
    Value, bonus and region label on a strictly increasing belief grid.
    When slopes holds the ODE right-hand side at every node the value is
    read off a cubic Hermite interpolant, otherwise linearly.
    """
    alphas: np.ndarray
    values: np.ndarray
    bonuses: np.ndarray
    regions: Tuple[Strategy, ...]
    slopes: Optional[np.ndarray] = None

    def __post_init__(self):
        if np.any(np.diff(self.alphas) <= 0.0):
            raise InvariantError("value curve grid must be strictly increasing")

    def __len__(self):
        return len(self.alphas)

    @cached_property
    def _hermite(self) -> Optional[CubicHermiteSpline]:
        if self.slopes is None or len(self.alphas) < 2:
            return None
        return CubicHermiteSpline(self.alphas, self.values, self.slopes, extrapolate=False)

    def value_at(self, alpha):
        if self._hermite is None:
            return np.interp(alpha, self.alphas, self.values)
        inside = np.clip(np.asarray(alpha, dtype=float), self.alphas[0], self.alphas[-1])
        return self._hermite(inside)

    def bonus_at(self, alpha):
        return np.interp(alpha, self.alphas, self.bonuses)

    @classmethod
    def join(cls, *pieces: "ValueCurve") -> "ValueCurve":
        """Concatenate pieces, dropping a node that repeats the previous alpha"""
        alphas, values, bonuses, regions, slopes = [], [], [], [], []
        with_slopes = all(piece.slopes is not None for piece in pieces)
        for piece in pieces:
            piece_slopes = piece.slopes if with_slopes else np.zeros(len(piece))
            for a, v, b, region, d in zip(piece.alphas, piece.values, piece.bonuses, piece.regions,
                                          piece_slopes):
                if alphas and a <= alphas[-1]:
                    continue
                alphas.append(a)
                values.append(v)
                bonuses.append(b)
                regions.append(region)
                slopes.append(d)
        return cls(np.array(alphas), np.array(values), np.array(bonuses), tuple(regions),
                   np.array(slopes) if with_slopes else None)


def _curve(segment: Segment, bonus_fn, region: Strategy, rhs=None) -> ValueCurve:
    bonuses = np.array([bonus_fn(a, v) for a, v in zip(segment.alphas, segment.values)])
    slopes = None
    if rhs is not None:
        slopes = np.array([rhs(a, v) for a, v in zip(segment.alphas, segment.values)])
    return ValueCurve(segment.alphas, segment.values, bonuses, (region,) * len(segment.alphas), slopes)


@dataclass(frozen=True)
class PolicyMap:
    """
    Switching cutoffs, the dense marched curve and the stored export grid.
    alpha_pc_ir and alpha_ir_fc are set only for a model solved on the IR path.
    """
    model: ContinuousModel
    alpha_sa_pc: float
    alpha_pc_fc: float
    alpha_fc_nb: float
    dense: ValueCurve
    curve: Optional[ValueCurve] = None
    alpha_pc_ir: Optional[float] = None
    alpha_ir_fc: Optional[float] = None

    @property
    def has_ir(self) -> bool:
        return self.alpha_pc_ir is not None

    @property
    def fc_start(self) -> float:
        return self.alpha_ir_fc if self.has_ir else self.alpha_pc_fc

    def cutoffs(self) -> list:
        return [self.alpha_sa_pc, self.alpha_pc_fc, self.alpha_fc_nb, self.alpha_pc_ir, self.alpha_ir_fc]

    def _edges(self) -> Tuple[float, float, float, float]:
        pc_end = self.alpha_pc_ir if self.has_ir else self.alpha_pc_fc
        return self.alpha_sa_pc, pc_end, self.fc_start, self.alpha_fc_nb

    def region_of(self, alpha: float) -> Strategy:
        return CODE_REGIONS[int(self.region_codes(np.asarray([alpha]))[0])]

    def region_codes(self, alphas: np.ndarray) -> np.ndarray:
        """Region code per belief; half-open intervals closed on the left"""
        edges = np.asarray(self._edges())
        codes = np.searchsorted(edges, alphas, side="right")
        return codes.astype(np.int64)

    def bonus_array(self, alphas: np.ndarray) -> np.ndarray:
        alphas = np.asarray(alphas, dtype=float)
        codes = self.region_codes(alphas)
        bonus = np.clip(self.dense.bonus_at(alphas), 0.0, self.model.cbar)
        bonus = np.where(codes == REGION_CODES[Strategy.IR], self.model.cbar, bonus)
        learning = (codes == REGION_CODES[Strategy.PC]) | (codes == REGION_CODES[Strategy.IR]) | \
                   (codes == REGION_CODES[Strategy.FC])
        return np.where(learning, bonus, 0.0)

    def value_array(self, alphas: np.ndarray) -> np.ndarray:
        alphas = np.asarray(alphas, dtype=float)
        inside = self.dense.value_at(alphas)
        values = np.where(alphas < self.alpha_sa_pc, self.model.sa_value(), inside)
        return np.where(alphas >= self.alpha_fc_nb, self.model.nb_value(alphas), values)

    def value_at(self, alpha: float) -> float:
        return float(self.value_array(np.asarray([alpha]))[0])


# ---------- Marching pieces ----------

def value_marcher(model: ContinuousModel, rhs, settings: SolverSettings, name: str) -> Marcher:
    floor = model.sa_value()
    return Marcher(rhs, settings, floor=lambda alpha: floor, name=name)


def _march_pc(model: ContinuousModel, settings: SolverSettings, alpha_stop: float,
              stop_at_cap: bool) -> Segment:
    alpha2 = model.cutoff_sa_pc()
    cap_event = None
    if stop_at_cap:
        cap, r, s = model.info_cap, model.r, model.s
        cap_event = lambda alpha, u: cap - (r * u - s)
    marcher = value_marcher(model, model.pc_rhs, settings, "PC")
    launch = alpha2 + settings.launch_offset
    segment = marcher.march(launch, model.sa_value(), alpha_stop, cap_event)
    # Prepend the pasting point itself
    return Segment(np.concatenate(([alpha2], segment.alphas)),
                   np.concatenate(([model.sa_value()], segment.values)),
                   segment.event_alpha)


def solve_pc_curve(model: ContinuousModel, settings: SolverSettings) -> ValueCurve:
    """
    PC value U on [alpha_SA^PC, alpha_PC^FC], launched with U = s/r and zero
    slope. Raises RegimeError if the bonus reaches the cost cap.
    """
    with get_metrics().timed("pc_curve"):
        segment = _march_pc(model, settings, model.cutoff_pc_fc(), stop_at_cap=False)
    wedge_top = model.r * segment.values.max() - model.s
    if wedge_top >= model.info_cap * (1.0 - 1e-12):
        raise RegimeError(
            f"PC bonus reached the cost cap {model.cbar:.6g}; the model needs the IR path "
            f"(cbar <= {model.ir_threshold:.6g})"
        )
    logger.info("PC segment: %d nodes on [%.6f, %.6f]", len(segment.alphas),
                segment.alphas[0], segment.end_alpha)
    return _curve(segment, model.pc_bonus, Strategy.PC, model.pc_rhs)


def solve_fc_curve(model: ContinuousModel, u_at_switch: float, settings: SolverSettings,
                   alpha_start: Optional[float] = None) -> ValueCurve:
    """
    FC value V from (alpha_start, u_at_switch) up to the first belief where
    rV - alpha*g reaches 0 (the bonus hits 0), reported as alpha_FC^NB.
    """
    start = model.cutoff_pc_fc() if alpha_start is None else alpha_start
    r, g = model.r, model.g
    marcher = value_marcher(model, model.fc_rhs, settings, "FC")
    with get_metrics().timed("fc_curve"):
        segment = marcher.march(start, u_at_switch, 1.0 - settings.grid_step,
                                lambda alpha, v: r * v - alpha * g)
    if segment.event_alpha is None:
        raise NonTerminationError(
            f"FC bonus never reached 0 before alpha = {1.0 - settings.grid_step:.6g}"
        )
    logger.info("FC segment: %d nodes, alpha_FC^NB = %.8f", len(segment.alphas), segment.event_alpha)
    return _curve(segment, model.fc_bonus, Strategy.FC, model.fc_rhs)


# ---------- Naive benchmarks ----------

def naive_fc_boundary(model: ContinuousModel) -> Tuple[float, float]:
    """
    Stopping point (alpha_1, b_1) of a seller restricted to FC or SA:
    beta(b_1) = alpha_1 lambda (g - s)/r and s = alpha_1 g + H^2/h(b_1).
    """
    lam, g, s, r = model.lam, model.g, model.s, model.r
    slope = lam * (g - s) / r

    def bonus(alpha: float) -> float:
        return model.costs.info_rent_inverse(min(max(s - alpha * g, 0.0), model.info_cap))

    def gap(alpha: float) -> float:
        # decreasing in alpha; root is alpha_1
        return model.costs.virtual_value(bonus(alpha)) - alpha * slope

    lo = max((s - model.info_cap) / g, 0.0) + 1e-15
    hi = model.cutoff_pc_fc()
    alpha1 = bisect_root(gap, lo, hi, xtol=1e-14, what="naive FC boundary")
    return alpha1, bonus(alpha1)


def naive_fc_curve(model: ContinuousModel, settings: SolverSettings) -> ValueCurve:
    """FC-only seller: SA below alpha_1, FC from (alpha_1, s/r) until its bonus hits 0"""
    alpha1, _ = naive_fc_boundary(model)
    fc = solve_fc_curve(model, model.sa_value(), settings, alpha_start=alpha1)
    return fc


def naive_pc_curve(model: ContinuousModel, settings: SolverSettings) -> ValueCurve:
    """PC-only seller from alpha_SA^PC until 1 - grid_step or the bonus reaches the cap"""
    segment = _march_pc(model, settings, 1.0 - settings.grid_step, stop_at_cap=True)
    return _curve(segment, model.pc_bonus, Strategy.PC, model.pc_rhs)


# ---------- Full policies ----------

def solve_policy(model: ContinuousModel, settings: SolverSettings) -> PolicyMap:
    """SA -> PC -> FC -> NB policy for a model whose cost cap never binds"""
    if not model.ir_admissible:
        raise RegimeError(
            f"cbar = {model.cbar:.6g} does not exceed (lambda/r + 1)(g - s) = "
            f"{model.ir_threshold:.6g}; use solve_policy_with_ir"
        )
    pc = solve_pc_curve(model, settings)
    fc = solve_fc_curve(model, float(pc.values[-1]), settings)
    dense = ValueCurve.join(pc, fc)
    policy = PolicyMap(model, model.cutoff_sa_pc(), model.cutoff_pc_fc(), float(fc.alphas[-1]), dense)
    return _with_stored_grid(policy, settings)


def solve_policy_with_ir(model: ContinuousModel, settings: SolverSettings) -> PolicyMap:
    """
    SA -> PC -> IR -> FC -> NB policy. The IR value Y pastes onto U where
    the PC bonus reaches the cap and hands over to FC at the first belief
    past s/g where the FC bonus drops back below it.
    """
    if model.ir_admissible:
        raise RegimeError("solve_policy_with_ir needs a binding cost cap; use solve_policy")
    alpha3 = model.cutoff_pc_fc()
    with get_metrics().timed("pc_curve"):
        pc_segment = _march_pc(model, settings, alpha3, stop_at_cap=True)
    pc = _curve(pc_segment, model.pc_bonus, Strategy.PC, model.pc_rhs)

    if pc_segment.event_alpha is None:
        logger.info("Cost cap never binds; IR cutoffs merge at alpha_PC^FC = %.8f", alpha3)
        fc = solve_fc_curve(model, pc_segment.end_value, settings, alpha_start=alpha3)
        dense = ValueCurve.join(pc, fc)
        policy = PolicyMap(model, model.cutoff_sa_pc(), alpha3, float(fc.alphas[-1]), dense,
                           alpha_pc_ir=alpha3, alpha_ir_fc=alpha3)
        return _with_stored_grid(policy, settings)

    alpha_pc_ir = pc_segment.event_alpha
    r, g, s, cap = model.r, model.g, model.s, model.info_cap
    marcher = value_marcher(model, model.ir_rhs, settings, "IR")
    with get_metrics().timed("ir_curve"):
        ir_segment = marcher.march(
            alpha_pc_ir, pc_segment.end_value, 1.0 - settings.grid_step,
            lambda alpha, y: max(r * y - alpha * g - cap, s - alpha * g),
        )
    if ir_segment.event_alpha is None:
        raise NonTerminationError("IR segment never handed over to FC before alpha = 1")
    alpha_ir_fc = ir_segment.event_alpha
    cbar = model.cbar
    ir = _curve(ir_segment, lambda a, v: cbar, Strategy.IR, model.ir_rhs)
    logger.info("IR segment on [%.8f, %.8f]", alpha_pc_ir, alpha_ir_fc)

    fc = solve_fc_curve(model, ir_segment.end_value, settings, alpha_start=alpha_ir_fc)
    dense = ValueCurve.join(pc, ir, fc)
    policy = PolicyMap(model, model.cutoff_sa_pc(), alpha3, float(fc.alphas[-1]), dense,
                       alpha_pc_ir=alpha_pc_ir, alpha_ir_fc=alpha_ir_fc)
    return _with_stored_grid(policy, settings)


def solve(model: ContinuousModel, settings: SolverSettings) -> PolicyMap:
    """Pick the large-cap or the IR path from the model's admissibility flag"""
    if model.ir_admissible:
        return solve_policy(model, settings)
    return solve_policy_with_ir(model, settings)


def store_grid(cutoffs: Sequence[float], settings: SolverSettings) -> np.ndarray:
    """Uniform grid from just below the lowest cutoff to 0.999, plus the cutoffs"""
    cutoffs = [c for c in cutoffs if c is not None]
    lo = max(min(cutoffs) - DEFAULT_STORE_MARGIN, settings.grid_step)
    top = max(DEFAULT_STORE_TOP, max(cutoffs))
    grid = np.union1d(np.linspace(lo, top, settings.store_points), cutoffs)
    return grid[(grid > 0.0) & (grid < 1.0)]


def _with_stored_grid(policy: PolicyMap, settings: SolverSettings) -> PolicyMap:
    grid = store_grid(policy.cutoffs(), settings)
    codes = policy.region_codes(grid)
    curve = ValueCurve(grid, policy.value_array(grid), policy.bonus_array(grid),
                       tuple(CODE_REGIONS[int(c)] for c in codes))
    return replace(policy, curve=curve)


def policy_at(policy: PolicyMap, alpha: float) -> Tuple[Strategy, float, float]:
    """(region, bonus, value) at a belief in (0, 1)"""
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"belief must lie in (0, 1), got {alpha!r}")
    point = np.asarray([alpha])
    return policy.region_of(alpha), float(policy.bonus_array(point)[0]), float(policy.value_array(point)[0])


def fc_nb_by_slope(policy: PolicyMap, settings: SolverSettings) -> float:
    """
    alpha_FC^NB as the tangency point V' = lambda z / r, found by
    re-marching the FC value past its intersection with the NB line.
    """
    model = policy.model
    target = model.g / model.r
    marcher = value_marcher(model, model.fc_rhs, settings, "FC slope")
    start = policy.fc_start
    segment = marcher.march(start, float(policy.dense.value_at(start)), 1.0 - settings.grid_step,
                            lambda alpha, v: target - model.fc_rhs(alpha, v))
    if segment.event_alpha is None:
        raise NonTerminationError("FC slope never reached lambda z / r")
    return segment.event_alpha


# ---------- Exports and comparative statics ----------

def policy_frame(policy: PolicyMap) -> pd.DataFrame:
    curve = policy.curve
    return pd.DataFrame({
        "alpha": curve.alphas,
        "value": curve.values,
        "bonus": curve.bonuses,
        "region": [region.value for region in curve.regions],
    })


def cutoff_summary(policy: PolicyMap) -> dict:
    model = policy.model
    summary = {
        "alpha_sa_pc": policy.alpha_sa_pc,
        "alpha_pc_fc": policy.alpha_pc_fc,
        "alpha_fc_nb": policy.alpha_fc_nb,
        "alpha_pc_ir": policy.alpha_pc_ir,
        "alpha_ir_fc": policy.alpha_ir_fc,
        "alpha_ir": model.cutoff_ir(),
        "ir_path": policy.has_ir,
        "max_bonus": float(policy.dense.bonuses.max()),
    }
    try:
        summary["alpha_naive_fc"], summary["b_naive_fc"] = naive_fc_boundary(model)
    except SolverError:
        summary["alpha_naive_fc"] = summary["b_naive_fc"] = None
    return summary


def _sweep_rows(models: Sequence[Tuple[float, ContinuousModel]], settings: SolverSettings,
                name: str) -> pd.DataFrame:
    rows = []
    for param, model in models:
        policy = solve(model, settings)
        rows.append({
            name: param,
            "alpha_sa_pc": policy.alpha_sa_pc,
            "alpha_pc_fc": policy.alpha_pc_fc,
            "alpha_fc_nb": policy.alpha_fc_nb,
        })
    logger.info("Swept %s over %d values", name, len(rows))
    return pd.DataFrame(rows, columns=[name, "alpha_sa_pc", "alpha_pc_fc", "alpha_fc_nb"])


def sweep_arrival_rate(model: ContinuousModel, lambdas: Sequence[float], share: float,
                       settings: SolverSettings) -> pd.DataFrame:
    """Cutoffs across arrival rates with s/g held at share"""
    models = [
        (lam, ContinuousModel.with_share(model.r, lam, model.lump_value, share,
                                         model.costs, model.assume_large_cbar))
        for lam in lambdas
    ]
    return _sweep_rows(models, settings, "arrival_rate")


def sweep_discount_rate(model: ContinuousModel, rates: Sequence[float],
                        settings: SolverSettings) -> pd.DataFrame:
    models = [(rate, replace(model, discount_rate=rate)) for rate in rates]
    return _sweep_rows(models, settings, "discount_rate")
