"""
Social planner benchmark and the social surplus generated by the monopolist
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

from config import SolverSettings
from continuous import (
    CODE_REGIONS, REGION_CODES, ContinuousModel, PolicyMap, ValueCurve, solve, store_grid, value_marcher,
)
from failure import DomainError, NonTerminationError, SolverError, WelfareError
from metrics import get_metrics
from strategy import Strategy

logger = logging.getLogger(__name__)

WELFARE_SLACK = 1e-6
# Reporting probability below this is treated as zero in the surplus ODE
MIN_REPORT_MASS = 1e-12


@dataclass(frozen=True)
class MechanismRule:
    """Allocation p, reporting request q (None when p = 0) and flow transfer t"""
    p: int
    q: Optional[int]
    t: float


@dataclass(frozen=True)
class PlannerSolution:
    """
    Planner value W with its reporting cutoffs. The bonuses field of the
    curves holds C1 on the PC region and C2 on the FC region.
    """
    model: ContinuousModel
    alpha_sa_pc: float
    alpha_pc_fc: float
    alpha_fc_nb: float
    dense: ValueCurve
    c1: np.ndarray
    c2: np.ndarray
    curve: Optional[ValueCurve] = None

    def value_at(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        model = self.model
        values = np.where(alpha < self.alpha_sa_pc, model.sa_value(), self.dense.value_at(alpha))
        return np.where(alpha >= self.alpha_fc_nb, model.nb_value(alpha), values)

    def cutoffs_at(self, alpha: float) -> Tuple[float, Optional[float]]:
        """(C1, C2) at a belief; C2 is None below s/g"""
        model = self.model
        lam, g, s, r = model.lam, model.g, model.s, model.r
        surplus_inv = model.costs.reporting_surplus_inverse
        if alpha < self.alpha_sa_pc:
            return 0.0, None
        if alpha >= self.alpha_fc_nb:
            return (alpha * g - s) / lam, 0.0
        w = float(self.value_at(alpha))
        if alpha < self.alpha_pc_fc:
            return surplus_inv(max(r * w - s, 0.0) / lam), None
        c2 = surplus_inv(max(r * w - alpha * g, 0.0) / lam)
        return c2 + (alpha * g - s) / lam, c2

    def learning_value(self, alpha: float, w: float, slope: float) -> float:
        """B(alpha) recomputed from W and W'"""
        model = self.model
        lam = model.lam
        return model.denom(alpha) * slope + alpha * lam * model.g / model.r - alpha * lam * w


def _pc_cutoff(model: ContinuousModel, w: float) -> float:
    return model.costs.reporting_surplus_inverse(max(model.r * w - model.s, 0.0) / model.lam)


def _fc_cutoff(model: ContinuousModel, alpha: float, w: float) -> float:
    return model.costs.reporting_surplus_inverse(max(model.r * w - alpha * model.g, 0.0) / model.lam)


def planner_pc_rhs(model: ContinuousModel, alpha: float, w: float) -> float:
    lam, g, s = model.lam, model.g, model.s
    num = lam * _pc_cutoff(model, w) - alpha * g + s - alpha * lam * g / model.r + lam * alpha * w
    return num / model.denom(alpha)


def planner_fc_rhs(model: ContinuousModel, alpha: float, w: float) -> float:
    lam = model.lam
    num = lam * _fc_cutoff(model, alpha, w) - alpha * lam * model.g / model.r + lam * alpha * w
    return num / model.denom(alpha)


def solve_planner(model: ContinuousModel, settings: SolverSettings) -> PlannerSolution:
    """
    March W from the SA/PC cutoff through s/g until the FC reporting
    cutoff C2 reaches 0.
    """
    alpha2 = model.cutoff_sa_pc()
    alpha3 = model.cutoff_pc_fc()
    r, g = model.r, model.g
    with get_metrics().timed("planner"):
        pc_marcher = value_marcher(model, lambda a, w: planner_pc_rhs(model, a, w), settings, "planner PC")
        pc = pc_marcher.march(alpha2 + settings.launch_offset, model.sa_value(), alpha3)
        fc_marcher = value_marcher(model, lambda a, w: planner_fc_rhs(model, a, w), settings, "planner FC")
        fc = fc_marcher.march(alpha3, pc.end_value, 1.0 - settings.grid_step,
                              lambda alpha, w: r * w - alpha * g)
    if fc.event_alpha is None:
        raise NonTerminationError("planner FC cutoff never reached 0 before alpha = 1")

    pc_alphas = np.concatenate(([alpha2], pc.alphas))
    pc_values = np.concatenate(([model.sa_value()], pc.values))
    c1 = np.array([_pc_cutoff(model, w) for w in pc_values])
    c2 = np.array([_fc_cutoff(model, a, w) for a, w in zip(fc.alphas, fc.values)])
    pc_slopes = np.array([planner_pc_rhs(model, a, w) for a, w in zip(pc_alphas, pc_values)])
    fc_slopes = np.array([planner_fc_rhs(model, a, w) for a, w in zip(fc.alphas, fc.values)])
    dense = ValueCurve.join(
        ValueCurve(pc_alphas, pc_values, c1, (Strategy.PC,) * len(pc_alphas), pc_slopes),
        ValueCurve(fc.alphas, fc.values, c2, (Strategy.FC,) * len(fc.alphas), fc_slopes),
    )
    logger.info("Planner solved: alpha_FC^NB = %.8f (%d nodes)", fc.event_alpha, len(dense))
    sol = PlannerSolution(model, alpha2, alpha3, fc.event_alpha, dense, c1, c2)
    return _with_stored_grid(sol, settings)


def _with_stored_grid(sol: PlannerSolution, settings: SolverSettings) -> PlannerSolution:
    grid = store_grid([sol.alpha_sa_pc, sol.alpha_pc_fc, sol.alpha_fc_nb], settings)
    values = sol.value_at(grid)
    cutoffs, regions = [], []
    for alpha in grid:
        c1, c2 = sol.cutoffs_at(alpha)
        if alpha < sol.alpha_sa_pc:
            regions.append(Strategy.SA)
            cutoffs.append(0.0)
        elif alpha >= sol.alpha_fc_nb:
            regions.append(Strategy.NB)
            cutoffs.append(0.0)
        elif alpha < sol.alpha_pc_fc:
            regions.append(Strategy.PC)
            cutoffs.append(c1)
        else:
            regions.append(Strategy.FC)
            cutoffs.append(c2)
    curve = ValueCurve(grid, values, np.array(cutoffs), tuple(regions))
    return PlannerSolution(sol.model, sol.alpha_sa_pc, sol.alpha_pc_fc, sol.alpha_fc_nb,
                           sol.dense, sol.c1, sol.c2, curve)


def planner_frame(sol: PlannerSolution) -> pd.DataFrame:
    curve = sol.curve
    return pd.DataFrame({
        "alpha": curve.alphas,
        "W": curve.values,
        "C": curve.bonuses,
        "region": [region.value for region in curve.regions],
    })


# ---------- Mechanism ----------

def mechanism_at(sol: PlannerSolution, alpha: float, c: float) -> MechanismRule:
    """Optimal direct mechanism row for belief alpha and reported cost c"""
    model = sol.model
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"belief must lie in (0, 1), got {alpha!r}")
    if not (0.0 <= c <= model.cbar):
        raise DomainError(f"cost {c!r} outside [0, {model.cbar}]")
    g, lam, s = model.g, model.lam, model.s
    if alpha >= sol.alpha_fc_nb:
        return MechanismRule(1, 0, alpha * g)
    c1, c2 = sol.cutoffs_at(alpha)
    if alpha > sol.alpha_pc_fc:
        if c < c2:
            return MechanismRule(1, 1, alpha * g - lam * c2)
        if c < c1:
            return MechanismRule(1, 0, alpha * g)
        return MechanismRule(0, None, s)
    if c < c1:
        return MechanismRule(1, 1, alpha * g - lam * c1)
    return MechanismRule(0, None, s)


def agent_utility(sol: PlannerSolution, alpha: float, c: float, reported_c: float) -> float:
    """Flow utility of an agent with cost c who reports reported_c"""
    rule = mechanism_at(sol, alpha, reported_c)
    model = sol.model
    q = rule.q or 0
    return -rule.t + rule.p * (alpha * model.g - model.lam * q * c) + (1 - rule.p) * model.s


def mechanism_table(sol: PlannerSolution, alphas: Sequence[float], costs: Sequence[float]) -> pd.DataFrame:
    rows = []
    for alpha in alphas:
        for c in costs:
            rule = mechanism_at(sol, float(alpha), float(c))
            rows.append({"alpha": alpha, "c": c, "p": rule.p, "q": rule.q, "t": rule.t})
    return pd.DataFrame(rows, columns=["alpha", "c", "p", "q", "t"])


# ---------- Social surplus under the monopolist ----------

def _surplus_pieces(policy: PolicyMap, alpha: float) -> Tuple[float, float]:
    """(H(b), stage flow) at a belief under the monopolist's bonus"""
    model = policy.model
    point = np.asarray([alpha])
    code = int(policy.region_codes(point)[0])
    b = float(policy.bonus_array(point)[0])
    mass = model.costs.eval(b)[0]
    cost = model.costs.truncated_cost_mass(b)
    if code == REGION_CODES[Strategy.PC]:
        stage = mass * model.g * alpha - cost + (1.0 - mass) * model.s
    else:
        stage = alpha * model.g - cost
    return max(mass, MIN_REPORT_MASS), stage


def social_surplus_under_monopolist(policy: PolicyMap, settings: SolverSettings,
                                    grid: Optional[np.ndarray] = None) -> ValueCurve:
    """
    Surplus Lambda with the monopolist's bonus imposed:
    [r + H alpha lambda] Lambda = stage + H (alpha^2 - alpha) lambda Lambda'
                                  + H alpha lambda g / r.
    """
    model = policy.model
    r, lam, g = model.r, model.lam, model.g
    start = policy.alpha_sa_pc + settings.launch_offset
    stop = policy.alpha_fc_nb - settings.launch_offset

    def rhs(alpha, y):
        mass, stage = _surplus_pieces(policy, alpha)
        num = (r + mass * alpha * lam) * y[0] - stage - mass * alpha * lam * g / r
        return [num / (mass * model.denom(alpha))]

    def jac(alpha, y):
        mass, _ = _surplus_pieces(policy, alpha)
        return [[(r + mass * alpha * lam) / (mass * model.denom(alpha))]]

    with get_metrics().timed("social_surplus"):
        result = solve_ivp(rhs, (start, stop), [model.sa_value()], method="Radau", jac=jac,
                           rtol=1e-9, atol=1e-11, dense_output=True)
    if not result.success:
        raise SolverError(f"social surplus integration failed: {result.message}")
    logger.info("Social surplus solved on [%.6f, %.6f] in %d steps", start, stop, result.t.size)

    alphas = policy.curve.alphas if grid is None else np.asarray(grid, dtype=float)
    inside = (alphas >= start) & (alphas <= stop)
    values = np.where(alphas >= policy.alpha_fc_nb, model.nb_value(alphas), model.sa_value())
    if inside.any():
        values[inside] = result.sol(alphas[inside])[0]
    # Sub-offset slivers next to the pasting points take the adjacent closed form
    near_top = (alphas > stop) & (alphas < policy.alpha_fc_nb)
    values[near_top] = model.nb_value(alphas[near_top])
    codes = policy.region_codes(alphas)
    regions = tuple(CODE_REGIONS[int(code)] for code in codes)
    return ValueCurve(alphas, values, policy.bonus_array(alphas), regions)


# ---------- Comparisons ----------

def _interpolation_slack(curve: ValueCurve, alphas: np.ndarray) -> np.ndarray:
    """
    Bound on the interpolation error of a marched curve at alphas:
    the larger second difference of the values around the enclosing nodes.
    """
    if len(curve) < 3:
        return np.zeros_like(alphas)
    second = np.abs(np.diff(curve.values, 2))
    per_node = np.concatenate(([second[0]], second, [second[-1]]))
    per_node = np.maximum(per_node, np.concatenate((per_node[1:], per_node[-1:])))
    per_node = np.maximum(per_node, np.concatenate((per_node[:1], per_node[:-1])))
    return np.interp(alphas, curve.alphas, per_node, left=0.0, right=0.0)


def welfare_compare(model: ContinuousModel, settings: SolverSettings,
                    policy: Optional[PolicyMap] = None,
                    sol: Optional[PlannerSolution] = None) -> pd.DataFrame:
    """
    Planner W, surplus Lambda and profit Pi on a shared grid, checking
    W >= Lambda >= Pi and W = Lambda beyond the planner's NB cutoff.

    The ordering is checked on the monopolist's marched nodes together with
    the stored grid. Between nodes the check allows the interpolation error
    of the marched curves on top of WELFARE_SLACK.
    """
    policy = policy or solve(model, settings)
    sol = sol or solve_planner(model, settings)
    grid = store_grid(policy.cutoffs() + [sol.alpha_fc_nb], settings)

    nodes = policy.dense.alphas
    checked = np.union1d(grid, nodes[(nodes > policy.alpha_sa_pc) & (nodes < policy.alpha_fc_nb)])
    pi = policy.value_array(checked)
    w = sol.value_at(checked)
    surplus = social_surplus_under_monopolist(policy, settings, checked).values
    pi_slack = WELFARE_SLACK + np.where(np.isin(checked, nodes), 0.0,
                                        _interpolation_slack(policy.dense, checked))
    w_slack = WELFARE_SLACK + _interpolation_slack(sol.dense, checked)

    for alpha, w_a, l_a, p_a, w_tol, pi_tol in zip(checked, w, surplus, pi, w_slack, pi_slack):
        if w_a < l_a - w_tol:
            raise WelfareError(f"planner value {w_a:.10g} below surplus {l_a:.10g}", alpha)
        if l_a < p_a - pi_tol:
            raise WelfareError(f"surplus {l_a:.10g} below profit {p_a:.10g}", alpha)
        if alpha >= sol.alpha_fc_nb and abs(w_a - l_a) > WELFARE_SLACK:
            raise WelfareError(f"planner value {w_a:.10g} differs from surplus {l_a:.10g} past "
                               f"the planner NB cutoff", alpha)
    logger.info("Welfare ordering W >= Lambda >= Pi holds on %d points", checked.size)
    keep = np.isin(checked, grid)
    return pd.DataFrame({"alpha": checked[keep], "W": w[keep], "Lambda": surplus[keep], "Pi": pi[keep]})


def reporting_probabilities(sol: PlannerSolution, policy: PolicyMap,
                            alphas: Sequence[float]) -> pd.DataFrame:
    """Planner H(C(alpha)) against monopolist H(b(alpha))"""
    costs = sol.model.costs
    alphas = np.asarray(alphas, dtype=float)
    codes = policy.region_codes(alphas)
    bonuses = policy.bonus_array(alphas)
    rows = []
    for alpha, code, b in zip(alphas, codes, bonuses):
        c1, c2 = sol.cutoffs_at(float(alpha))
        cutoff = c1 if alpha < sol.alpha_pc_fc else c2
        if alpha < sol.alpha_sa_pc or alpha >= sol.alpha_fc_nb:
            cutoff = 0.0
        planner = costs.eval(min(cutoff, costs.cbar))[0] if cutoff > 0.0 else 0.0
        monopolist = costs.eval(float(b))[0] if b > 0.0 else 0.0
        rows.append({
            "alpha": alpha,
            "region": CODE_REGIONS[int(code)].value,
            "planner": planner,
            "monopolist": monopolist,
        })
    return pd.DataFrame(rows, columns=["alpha", "region", "planner", "monopolist"])
