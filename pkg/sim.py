"""
Monte Carlo evaluation of solved policies and bonus schedules
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import binom

from config import (
    DEFAULT_BLOCK_SIZE, DEFAULT_DT, DEFAULT_N_PATHS, DEFAULT_SEED, DEFAULT_SIM_HORIZON,
    DEFAULT_THREADS, DEFAULT_TRACE_PATHS,
)
from continuous import CODE_REGIONS, REGION_CODES, ContinuousModel, PolicyMap
from discrete import BonusSchedule, DiscreteModel
from failure import ConfigError, DomainError
from metrics import get_metrics
from strategy import Strategy
from utils import write_frame

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["path_id", "t", "alpha", "strategy", "bonus", "cost", "reported", "cash_flow"]
# Discretisation validity: lambda*dt and r*dt must stay below this
MAX_RATE_STEP = 0.1
# Periods of uniforms drawn per refill of a path's buffer
STREAM_CHUNK = 128

SA, PC, IR, FC, NB = (REGION_CODES[s] for s in
                      (Strategy.SA, Strategy.PC, Strategy.IR, Strategy.FC, Strategy.NB))


@dataclass(frozen=True)
class SimConfig:
    dt: float = DEFAULT_DT
    horizon: float = DEFAULT_SIM_HORIZON
    n_paths: int = DEFAULT_N_PATHS
    master_seed: int = DEFAULT_SEED
    alpha0: float = 0.5
    tail_correction: bool = True
    block_size: int = DEFAULT_BLOCK_SIZE
    threads: int = DEFAULT_THREADS
    trace_paths: int = DEFAULT_TRACE_PATHS

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ConfigError(f"[sim] dt must be positive, got {self.dt}")
        if not self.horizon > 0.0:
            raise ConfigError(f"[sim] horizon must be positive, got {self.horizon}")
        if self.n_paths < 1 or self.block_size < 1 or self.threads < 1:
            raise ConfigError("[sim] n_paths, block_size and threads must be at least 1")
        if not (0.0 < self.alpha0 < 1.0):
            raise ConfigError(f"[sim] alpha0 must lie in (0, 1), got {self.alpha0}")
        if self.trace_paths < 0:
            raise ConfigError("[sim] trace_paths must be non-negative")

    def check_rates(self, *rates: float):
        for rate in rates:
            if rate * self.dt >= MAX_RATE_STEP:
                raise ConfigError(
                    f"[sim] dt = {self.dt} too coarse: rate {rate} gives rate*dt >= {MAX_RATE_STEP}"
                )

    def block_sizes(self) -> List[int]:
        full, rest = divmod(self.n_paths, self.block_size)
        return [self.block_size] * full + ([rest] if rest else [])


@dataclass(frozen=True)
class SimResult:
    mean: float
    std_error: float
    n_paths: int
    good_state_fraction: float
    stop_time_mean: float
    stop_time_quantiles: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, totals: np.ndarray, good: np.ndarray, stop_times: np.ndarray) -> "SimResult":
        n = totals.size
        std_error = float(totals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        quantiles = {f"q{int(q * 100)}": float(np.quantile(stop_times, q)) for q in (0.1, 0.5, 0.9)}
        return cls(float(totals.mean()), std_error, n, float(good.mean()),
                   float(stop_times.mean()), quantiles)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "good_state_fraction": self.good_state_fraction,
            "stop_time_mean": self.stop_time_mean,
            "stop_time_quantiles": dict(self.stop_time_quantiles),
        }


class FixedStrategyPolicy:
    """A policy that plays one strategy at every belief, with a constant bonus"""

    def __init__(self, model: ContinuousModel, strategy: Strategy, bonus: float = 0.0):
        self.model = model
        self.strategy = strategy
        self.bonus = model.cbar if strategy is Strategy.IR else (bonus if strategy.learns else 0.0)

    def region_codes(self, alphas: np.ndarray) -> np.ndarray:
        return np.full(np.shape(alphas), REGION_CODES[self.strategy], dtype=np.int64)

    def bonus_array(self, alphas: np.ndarray) -> np.ndarray:
        return np.full(np.shape(alphas), self.bonus)

    def value_array(self, alphas: np.ndarray) -> np.ndarray:
        alphas = np.asarray(alphas, dtype=float)
        if self.strategy is Strategy.SA:
            return np.full(alphas.shape, self.model.sa_value())
        if self.strategy is Strategy.NB:
            return self.model.nb_value(alphas)
        raise DomainError(f"no closed-form value for a fixed {self.strategy.value} policy")


def bayes_update(alpha, arrival_rate: float, dt: float):
    """Posterior after one report without news: alpha e^{-l dt} / (alpha e^{-l dt} + 1 - alpha)"""
    decay = math.exp(-arrival_rate * dt)
    alpha = np.asarray(alpha, dtype=float)
    updated = alpha * decay / (alpha * decay + 1.0 - alpha)
    return float(updated) if updated.ndim == 0 else updated


def path_generator(seed: int, path: int) -> np.random.Generator:
    """Counter-based Philox stream of one path, keyed by its global index"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(path,))))


class PathStreams:
    """
    Uniform streams for one block of paths. A path's draws depend only on
    the master seed and its global index, never on the block layout or the
    thread that runs it.
    """

    def __init__(self, seed: int, first_path: int, size: int, width: int):
        self.generators = [path_generator(seed, first_path + i) for i in range(size)]
        self.width = width
        self._buffer = np.empty((size, STREAM_CHUNK, width))

    def initial(self) -> np.ndarray:
        """One uniform per path, drawn before the first period"""
        return np.array([gen.random() for gen in self.generators])

    def period(self, k: int, rows: np.ndarray) -> np.ndarray:
        """Uniforms of period k for the block rows still active, shape (len(rows), width)"""
        slot = k % STREAM_CHUNK
        if slot == 0:
            for i in rows:
                self._buffer[i] = self.generators[i].random((STREAM_CHUNK, self.width))
        return self._buffer[rows, slot]


def _run_blocks(worker, sizes: Sequence[int], threads: int):
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(int)
    jobs = [(block, int(first), size) for block, (first, size) in enumerate(zip(starts, sizes))]
    if threads == 1:
        return [worker(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map keeps block order, so the reduction is independent of scheduling
        return list(pool.map(lambda job: worker(*job), jobs))


# ---------- Continuous model ----------

def simulate_continuous(policy: PolicyMap, cfg: SimConfig, trace: Optional[list] = None) -> SimResult:
    """
    Discounted seller profit under a belief-indexed policy, Delta-period
    accounting: price at period start, bonus at period end, lump within the
    period with probability 1 - e^{-lambda dt} in the good state.
    """
    result, _ = _simulate_continuous(policy, cfg, trace)
    return result


def _simulate_continuous(policy, cfg: SimConfig, trace: Optional[list] = None,
                         checkpoints: Sequence[int] = ()) -> tuple:
    """
    Runs the paths and also returns, for each k in checkpoints, the state
    and belief of every path right after its k-th report without news.
    """
    model = policy.model
    cfg.check_rates(model.lam, model.r)
    r, lam, g, s, dt = model.r, model.lam, model.g, model.s, cfg.dt
    end_discount = math.exp(-r * dt)
    risky_factor = lam * (1.0 - math.exp(-(r + lam) * dt)) * model.lump_value / (lam + r)
    safe_price = (1.0 - end_discount) * s / r
    bonus_factor = (1.0 - end_discount) / r * end_discount
    news_prob = 1.0 - math.exp(-lam * dt)
    n_steps = int(round(cfg.horizon / dt))
    watched = set(checkpoints)

    def worker(block: int, first: int, size: int) -> tuple:
        streams = PathStreams(cfg.master_seed, first, size, 2)
        good_all = streams.initial() < cfg.alpha0
        totals = np.zeros(size)
        stop_times = np.full(size, n_steps * dt)
        census = {k: ([], []) for k in watched}
        rows = [] if trace is not None and first < cfg.trace_paths else None
        ids = np.arange(size)
        alpha = np.full(size, cfg.alpha0)
        good = good_all.copy()
        reports = np.zeros(size, dtype=np.int64)
        periods = 0

        for k in range(n_steps):
            if ids.size == 0:
                break
            t = k * dt
            disc = math.exp(-r * t)
            codes = policy.region_codes(alpha)
            bonus = policy.bonus_array(alpha)

            if cfg.tail_correction:
                absorbed = (codes == SA) | (codes == NB)
                if absorbed.any():
                    tail = np.where(codes[absorbed] == SA, s / r, alpha[absorbed] * g / r)
                    totals[ids[absorbed]] += disc * tail
                    stop_times[ids[absorbed]] = t
                    keep = ~absorbed
                    ids, alpha, good, reports = ids[keep], alpha[keep], good[keep], reports[keep]
                    codes, bonus = codes[keep], bonus[keep]
                    if ids.size == 0:
                        break

            periods += ids.size
            draws = streams.period(k, ids)
            cost = model.costs.quantile(draws[:, 0])
            reported = ((cost <= bonus) & (bonus > 0.0)) | (codes == IR)
            risky = (codes == FC) | (codes == IR) | (codes == NB) | ((codes == PC) & reported)
            revenue = np.where(risky, risky_factor * alpha, safe_price)
            cash = disc * (revenue - np.where(reported, bonus * bonus_factor, 0.0))
            totals[ids] += cash

            news = reported & good & (draws[:, 1] < news_prob)
            if news.any():
                totals[ids[news]] += disc * end_discount * g / r
                stop_times[ids[news]] = t + dt
            if rows is not None:
                _record_trace(rows, first + ids, t, alpha, codes, bonus, cost, reported, cash,
                              cfg.trace_paths)

            learn = reported & ~news
            alpha = np.where(learn, bayes_update(alpha, lam, dt), alpha)
            reports = reports + learn
            for n_reports, (states, beliefs) in census.items():
                hit = learn & (reports == n_reports)
                if hit.any():
                    states.append(good[hit])
                    beliefs.append(alpha[hit])
            keep = ~news
            ids, alpha, good, reports = ids[keep], alpha[keep], good[keep], reports[keep]

        if ids.size and cfg.tail_correction:
            totals[ids] += math.exp(-r * n_steps * dt) * policy.value_array(alpha)
        get_metrics().record_paths(size, periods)
        logger.debug("Block %d: paths %d..%d, %d path-periods", block, first, first + size - 1, periods)
        census = {k: (_stack(states, bool), _stack(beliefs, float)) for k, (states, beliefs) in census.items()}
        return totals, good_all, stop_times, census, rows

    with get_metrics().timed("simulate_continuous"):
        blocks = _run_blocks(worker, cfg.block_sizes(), cfg.threads)
    result = SimResult.from_samples(*(np.concatenate(parts) for parts in zip(*(b[:3] for b in blocks))))
    census = {k: (_stack([b[3][k][0] for b in blocks], bool), _stack([b[3][k][1] for b in blocks], float))
              for k in watched}
    if trace is not None:
        for block in blocks:
            trace.extend(block[4] or [])
    logger.info("Continuous simulation at alpha0=%.4f: %.8f +/- %.2g (%d paths)",
                cfg.alpha0, result.mean, result.std_error, result.n_paths)
    return result, census


def _stack(parts: list, dtype) -> np.ndarray:
    return np.concatenate(parts) if parts else np.zeros(0, dtype=dtype)


def _record_trace(trace, path_ids, t, alpha, codes, bonus, cost, reported, cash, limit):
    for i in np.nonzero(path_ids < limit)[0]:
        trace.append({
            "path_id": int(path_ids[i]),
            "t": t,
            "alpha": float(alpha[i]),
            "strategy": CODE_REGIONS[int(codes[i])].value,
            "bonus": float(bonus[i]),
            "cost": float(cost[i]),
            "reported": bool(reported[i]),
            "cash_flow": float(cash[i]),
        })


def write_trace(rows: list, path):
    write_frame(pd.DataFrame(rows, columns=TRACE_COLUMNS), path)


# ---------- Discrete model ----------

def simulate_discrete(model: DiscreteModel, schedule: BonusSchedule, law, cfg: SimConfig) -> SimResult:
    """
    Discounted profit of a finite-horizon schedule: R1 is drawn once per
    path, costs iid per period, revelation after the first report.
    """
    if model.infinite:
        raise DomainError("simulate_discrete needs a finite horizon")
    T = int(model.horizon)
    r, er1, r2 = model.discount, model.er1, model.r2
    strategy = schedule.strategy
    bonuses = np.array([schedule.bonus_at(t) for t in range(1, T + 1)])

    def worker(block: int, first: int, size: int) -> tuple:
        r1 = np.empty(size)
        costs = np.empty((size, T))
        for i in range(size):
            gen = path_generator(cfg.master_seed, first + i)
            r1[i] = law.sample(gen, 1)[0]
            costs[i] = model.costs.sample(gen, T)
        best = np.maximum(r1, r2)
        revealed = np.zeros(size, dtype=bool)
        totals = np.zeros(size)
        stop_times = np.full(size, float(T))
        for t in range(T):
            disc = r ** t
            b = bonuses[t]
            reports = ~revealed & (costs[:, t] <= b) & (b > 0.0) if strategy.learns else np.zeros(size, bool)
            if strategy is Strategy.SA:
                before = np.full(size, r2)
            elif strategy is Strategy.PC:
                before = np.where(reports, er1 - b, r2)
            else:
                before = er1 - np.where(reports, b, 0.0)
            totals += disc * np.where(revealed, best, before)
            stop_times = np.where(reports & (stop_times == T), t + 1.0, stop_times)
            revealed |= reports
        get_metrics().record_paths(size, size * T)
        return totals, r1 > r2, stop_times

    with get_metrics().timed("simulate_discrete"):
        blocks = _run_blocks(worker, cfg.block_sizes(), cfg.threads)
    result = SimResult.from_samples(*(np.concatenate(parts) for parts in zip(*blocks)))
    logger.info("Discrete simulation (%s, T=%d): %.8f +/- %.2g", strategy.value, T,
                result.mean, result.std_error)
    return result


# ---------- Belief consistency ----------

def posterior_consistency(model: ContinuousModel, alpha0: float, dt: float, checkpoints: Sequence[int],
                          n_paths: int, seed: int = DEFAULT_SEED, policy=None,
                          horizon: Optional[float] = None) -> pd.DataFrame:
    """
    Runs the continuous simulator and compares, for each k in checkpoints,
    the good-state share among paths whose k-th report brought no news
    with the analytic posterior and its 99% binomial interval. belief_gap
    is the largest distance between a path's belief and that posterior.

    The default policy plays IR at every belief, so every period is a report
    and the default horizon of max(checkpoints) + 1 periods suffices. Pass a
    longer horizon for a policy that reports less often.
    """
    policy = policy or FixedStrategyPolicy(model, Strategy.IR)
    checkpoints = sorted(set(int(k) for k in checkpoints))
    if not checkpoints or checkpoints[0] < 1:
        raise DomainError("checkpoints must be positive report counts")
    cfg = SimConfig(dt=dt, horizon=horizon or (checkpoints[-1] + 1) * dt, n_paths=n_paths, master_seed=seed,
                    alpha0=alpha0, tail_correction=False)
    _, census = _simulate_continuous(policy, cfg, checkpoints=checkpoints)

    decay = math.exp(-model.lam * dt)
    rows = []
    for k in checkpoints:
        good, beliefs = census[k]
        n = int(good.size)
        posterior = alpha0 * decay ** k / (alpha0 * decay ** k + 1.0 - alpha0)
        if n:
            hits = int(good.sum())
            lo, hi = binom.interval(0.99, n, posterior)
            row = {"empirical": hits / n, "lower": lo / n, "upper": hi / n, "within": bool(lo <= hits <= hi),
                   "belief_gap": float(np.max(np.abs(beliefs - posterior)))}
        else:
            nan = float("nan")
            row = {"empirical": nan, "lower": nan, "upper": nan, "within": False, "belief_gap": nan}
        rows.append({"k": k, "n_paths": n, "posterior": posterior, **row})
    frame = pd.DataFrame(rows, columns=["k", "n_paths", "empirical", "posterior", "lower", "upper",
                                        "within", "belief_gap"])
    logger.info("Posterior check over %d paths at checkpoints %s", n_paths, checkpoints)
    return frame
