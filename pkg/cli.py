import sys
import shutil
import logging
import argparse
import tempfile
from pathlib import Path
from typing import Callable, Dict, Optional

import numpy as np
import pandas as pd

from config import (
    DEFAULT_DT, DEFAULT_N_PATHS, DEFAULT_SEED, DEFAULT_SIM_HORIZON, DEFAULT_BLOCK_SIZE,
    DEFAULT_TRACE_PATHS, RunConfig,
)
from cost_model import CostDistribution
from discrete import (
    DiscreteModel, NumericQuadrature, RhoMix, UniformR1, discrete_summary, emax_oracle, sweep_r2,
)
from continuous import (
    ContinuousModel, cutoff_summary, fc_nb_by_slope, naive_fc_curve, naive_pc_curve,
    policy_frame, solve, sweep_arrival_rate, sweep_discount_rate,
)
from planner import (
    mechanism_table, planner_frame, reporting_probabilities, solve_planner, welfare_compare,
)
from sim import SimConfig, simulate_continuous, simulate_discrete, write_trace
from strategy import Strategy
from failure import BanditBonusError, ConfigError, SolverError, exit_code_for
from metrics import get_metrics, reset_metrics
from utils import write_frame, write_json

logger = logging.getLogger(__name__)

LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"

DEFAULT_ALPHA_POINTS = 19
DEFAULT_COST_POINTS = 11
DEFAULT_PORT = 5001


def configure_logging(level: str):
    logging.basicConfig(format=LOG_FORMAT)
    logging.getLogger().setLevel(level.upper())


# ---------- Model builders ----------

def _resolve_path(run: RunConfig, raw: str) -> Path:
    path = Path(raw)
    if not path.is_absolute() and run.source != "<text>":
        path = Path(run.source).parent / path
    return path


def build_costs(run: RunConfig) -> CostDistribution:
    kind = run.get_str("cost", "kind", "uniform").lower()
    if kind == "uniform":
        return CostDistribution.uniform(run.get_float("cost", "cbar", 1.0))
    if kind == "tabulated":
        raw = run.get_str("cost", "csv")
        if raw is None:
            raise ConfigError("[cost] kind = tabulated needs a csv path")
        return CostDistribution.from_csv(_resolve_path(run, raw))
    raise ConfigError(f"[cost] kind must be uniform or tabulated, got {kind!r}")


def build_r1_law(run: RunConfig):
    law = run.get_str("discrete", "r1_law", "uniform").lower()
    if law == "uniform":
        return UniformR1(run.get_float("discrete", "r1_upper", 4.0))
    if law == "rho_mix":
        return RhoMix(run.require_float("discrete", "rho"))
    if law == "tabulated":
        raw = run.get_str("discrete", "r1_csv")
        if raw is None:
            raise ConfigError("[discrete] r1_law = tabulated needs r1_csv")
        return NumericQuadrature.from_csv(_resolve_path(run, raw))
    raise ConfigError(f"[discrete] r1_law must be uniform, rho_mix or tabulated, got {law!r}")


def build_discrete(run: RunConfig) -> DiscreteModel:
    law = build_r1_law(run)
    r2 = run.require_float("discrete", "r2")
    er1 = run.get_float("discrete", "er1", law.mean())
    emax = run.get_float("discrete", "emax", emax_oracle(law, r2))
    return DiscreteModel(run.horizon(), run.require_float("discrete", "discount"), er1, emax, r2,
                         build_costs(run))


def build_continuous(run: RunConfig) -> ContinuousModel:
    r = run.require_float("continuous", "discount_rate")
    lam = run.require_float("continuous", "arrival_rate")
    z = run.require_float("continuous", "lump_value")
    assume = run.get_bool("continuous", "assume_large_cbar")
    costs = build_costs(run)
    if run.has("continuous", "safe_share"):
        if run.has("continuous", "safe_flow"):
            raise ConfigError("[continuous] give either safe_flow or safe_share, not both")
        return ContinuousModel.with_share(r, lam, z, run.get_float("continuous", "safe_share"), costs, assume)
    return ContinuousModel(r, lam, z, run.require_float("continuous", "safe_flow"), costs, assume)


def build_sim_config(run: RunConfig) -> SimConfig:
    return SimConfig(
        dt=run.get_float("sim", "dt", DEFAULT_DT),
        horizon=run.get_float("sim", "horizon", DEFAULT_SIM_HORIZON),
        n_paths=run.get_int("sim", "n_paths", DEFAULT_N_PATHS),
        master_seed=run.get_int("sim", "master_seed", DEFAULT_SEED),
        alpha0=run.get_float("sim", "alpha0", 0.5),
        tail_correction=run.get_bool("sim", "tail_correction", True),
        block_size=run.get_int("sim", "block_size", DEFAULT_BLOCK_SIZE),
        threads=run.threads(),
        trace_paths=run.get_int("sim", "trace_paths", DEFAULT_TRACE_PATHS),
    )


def _require_model(run: RunConfig, kind: str, command: str):
    if run.model_kind != kind:
        raise ConfigError(f"command {command} needs a [{kind}] section, config has [{run.model_kind}]")


# ---------- Commands ----------

def cmd_solve_discrete(run: RunConfig, out: Path) -> dict:
    _require_model(run, "discrete", "solve-discrete")
    model = build_discrete(run)
    summary = discrete_summary(model)
    if model.infinite:
        schedule = pd.DataFrame({"t": ["inf"], "bonus": [summary["bonuses"][0]]})
    else:
        bonuses = summary["bonuses"]
        schedule = pd.DataFrame({"t": np.arange(1, len(bonuses) + 1), "bonus": bonuses})
    write_frame(schedule, out / "schedule.csv")
    logger.info("Optimal strategy %s with profit %.12g", summary["strategy"], summary["profit"])
    return {"discrete": summary}


def cmd_solve_continuous(run: RunConfig, out: Path) -> dict:
    _require_model(run, "continuous", "solve-continuous")
    model = build_continuous(run)
    settings = run.solver_settings()
    policy = solve(model, settings)
    write_frame(policy_frame(policy), out / "policy.csv")

    grid = policy.curve.alphas
    try:
        naive_fc = naive_fc_curve(model, settings)
        fc_only = np.where(grid < naive_fc.alphas[0], model.sa_value(), naive_fc.value_at(grid))
        fc_only = np.where(grid > naive_fc.alphas[-1], model.nb_value(grid), fc_only)
    except SolverError as exc:
        logger.warning("No FC-only benchmark for this model: %s", exc)
        fc_only = np.full(grid.shape, np.nan)
    naive_pc = naive_pc_curve(model, settings)
    pc_only = np.where(grid < model.cutoff_sa_pc(), model.sa_value(), naive_pc.value_at(grid))
    pc_only = np.where(grid > naive_pc.alphas[-1], np.nan, pc_only)
    write_frame(pd.DataFrame({"alpha": grid, "optimal": policy.curve.values,
                              "fc_only": fc_only, "pc_only": pc_only}), out / "naive.csv")

    summary = cutoff_summary(policy)
    summary["alpha_fc_nb_slope"] = fc_nb_by_slope(policy, settings)
    return {"continuous": summary}


def cmd_solve_planner(run: RunConfig, out: Path) -> dict:
    _require_model(run, "continuous", "solve-planner")
    model = build_continuous(run)
    settings = run.solver_settings()
    sol = solve_planner(model, settings)
    write_frame(planner_frame(sol), out / "planner.csv")
    n_alpha = run.get_int("mechanism", "alpha_points", DEFAULT_ALPHA_POINTS)
    n_cost = run.get_int("mechanism", "cost_points", DEFAULT_COST_POINTS)
    alphas = np.linspace(0.0, 1.0, n_alpha + 2)[1:-1]
    costs = np.linspace(0.0, model.cbar, n_cost)
    write_frame(mechanism_table(sol, alphas, costs), out / "mechanism.csv")
    logger.info("Planner cutoffs %.8f / %.8f / %.8f (grid step %g)",
                sol.alpha_sa_pc, sol.alpha_pc_fc, sol.alpha_fc_nb, settings.grid_step)
    return {"planner": {
        "alpha_sa_pc": sol.alpha_sa_pc,
        "alpha_pc_fc": sol.alpha_pc_fc,
        "alpha_fc_nb": sol.alpha_fc_nb,
        "max_c1": float(sol.c1.max()),
        "max_c2": float(sol.c2.max()),
    }}


def cmd_simulate(run: RunConfig, out: Path) -> dict:
    cfg = build_sim_config(run)
    raw_strategy = run.get_str("sim", "strategy")
    if run.model_kind == "discrete":
        model = build_discrete(run)
        law = build_r1_law(run)
        strategy, schedule, oracle = model.optimal_strategy()
        if raw_strategy is not None:
            strategy = Strategy(raw_strategy.upper())
            schedule = dict((s, sched) for s, sched in model.candidates()).get(strategy)
            if schedule is None:
                raise ConfigError(f"[sim] strategy {strategy.value} is not admissible for this model")
            oracle = model.strategy_profit(strategy, schedule)
        result = simulate_discrete(model, schedule, law, cfg)
        label = strategy.value
    else:
        if raw_strategy is not None:
            raise ConfigError("[sim] strategy applies to discrete models only")
        model = build_continuous(run)
        policy = solve(model, run.solver_settings())
        trace = [] if cfg.trace_paths > 0 else None
        result = simulate_continuous(policy, cfg, trace)
        if trace is not None:
            write_trace(trace, out / "trace.csv")
        oracle = policy.value_at(cfg.alpha0)
        label = policy.region_of(cfg.alpha0).value
    z_score = (result.mean - oracle) / result.std_error if result.std_error > 0 else 0.0
    return {"simulation": dict(result.to_dict(), oracle=oracle, z_score=z_score, strategy=label)}


def cmd_sweep(run: RunConfig, out: Path) -> dict:
    parameter = run.get_str("sweep", "parameter")
    if parameter is None:
        raise ConfigError("sweep needs [sweep] parameter")
    grid = np.linspace(run.require_float("sweep", "start"), run.require_float("sweep", "stop"),
                       run.get_int("sweep", "num", 41))
    if parameter == "r2":
        _require_model(run, "discrete", "sweep r2")
        frame = sweep_r2(build_discrete(run), grid, build_r1_law(run))
        switches = [
            {"r2": float(frame.r2[i]), "from": frame.winner[i - 1], "to": frame.winner[i]}
            for i in range(1, len(frame)) if frame.winner[i] != frame.winner[i - 1]
        ]
        extra = {"switches": switches}
    elif parameter in ("arrival_rate", "discount_rate"):
        _require_model(run, "continuous", f"sweep {parameter}")
        model = build_continuous(run)
        settings = run.solver_settings()
        if parameter == "arrival_rate":
            share = run.get_float("sweep", "share", model.s / model.g)
            frame = sweep_arrival_rate(model, grid, share, settings)
        else:
            frame = sweep_discount_rate(model, grid, settings)
        extra = {}
    else:
        raise ConfigError(f"[sweep] parameter must be r2, arrival_rate or discount_rate, got {parameter!r}")
    write_frame(frame, out / "sweep.csv")
    return {"sweep": dict(extra, parameter=parameter, points=len(frame))}


def cmd_compare_welfare(run: RunConfig, out: Path) -> dict:
    _require_model(run, "continuous", "compare-welfare")
    model = build_continuous(run)
    settings = run.solver_settings()
    policy = solve(model, settings)
    sol = solve_planner(model, settings)
    frame = welfare_compare(model, settings, policy, sol)
    write_frame(frame, out / "welfare.csv")
    probs = reporting_probabilities(sol, policy, frame.alpha.to_numpy())
    return {"welfare": {
        "monopolist_alpha_fc_nb": policy.alpha_fc_nb,
        "planner_alpha_fc_nb": sol.alpha_fc_nb,
        "max_gap_w_lambda": float((frame.W - frame.Lambda).max()),
        "max_gap_lambda_pi": float((frame.Lambda - frame.Pi).max()),
        "min_probability_gap": float((probs.planner - probs.monopolist).min()),
    }}


COMMANDS: Dict[str, Callable[[RunConfig, Path], dict]] = {
    "solve-discrete": cmd_solve_discrete,
    "solve-continuous": cmd_solve_continuous,
    "solve-planner": cmd_solve_planner,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "compare-welfare": cmd_compare_welfare,
}

HELP = {
    "solve-discrete": "Optimal bonus schedule and strategy (data of the two-period schedule example)",
    "solve-continuous": "Value function, bonus profile and cutoffs (data of the value/bonus figures "
                        "and the naive-seller comparison)",
    "solve-planner": "Planner value, reporting cutoffs and the optimal mechanism table",
    "simulate": "Monte Carlo check of a solved policy or schedule",
    "sweep": "Strategy profits over R2 or cutoffs over lambda / r (data of the strategy-crossing "
             "and comparative-statics figures)",
    "compare-welfare": "Planner value, social surplus and profit (data of the welfare comparison figure)",
    "validate": "Check every assumption without solving and report the regime",
    "serve": "Solve a continuous model and serve read-only lookups over HTTP",
}


def validate(run: RunConfig) -> list:
    """Dry-run assumption checks; returns the report lines"""
    lines = [f"config: {run.source}", f"model: {run.model_kind}"]
    run.solver_settings()
    if run.model_kind == "discrete":
        model = build_discrete(run)
        summary = model.summary()
        lines.append(f"M = {summary['M']:.12g}, N = {summary['N']:.12g}")
        lines.append(f"Psi(cbar) = {summary['psi_at_cbar']:.12g}, Psi_N(cbar) = {summary['psi_n_at_cbar']:.12g}")
        regime = "no immediate revelation" if summary["no_ir_assumption"] else "immediate revelation possible"
        lines.append(f"regime: {regime}")
    else:
        model = build_continuous(run)
        lines.append(f"g = {model.g:.12g} > s = {model.s:.12g} > 0: ok")
        lines.append(f"cbar = {model.cbar:.12g}, (lambda/r + 1)(g - s) = {model.ir_threshold:.12g}")
        if model.assume_large_cbar:
            lines.append("cbar assumed large")
        lines.append(f"ir_admissible = {str(model.ir_admissible).lower()}")
        lines.append("regime: " + ("large cbar" if model.ir_admissible else "immediate revelation (IR path)"))
    return lines


def _publish(staging: Path, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    for item in staging.iterdir():
        target = out / item.name
        if target.exists():
            target.unlink()
        shutil.move(str(item), str(target))


def run_command(command: str, run: RunConfig) -> dict:
    """Run a solver command, writing artifacts only if it completes"""
    out = run.output_dir()
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out.parent))
    try:
        with get_metrics().timed(command):
            summary = COMMANDS[command](run, staging)
        summary.update({
            "command": command,
            "resolved_config": run.resolved().to_ini(),
            "metrics": get_metrics().get_summary(),
        })
        write_json(summary, staging / "summary.json")
        _publish(staging, out)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    logger.info("Wrote artifacts to %s", out)
    return summary


def serve(run: RunConfig, port: int):
    from api import create_app

    _require_model(run, "continuous", "serve")
    model = build_continuous(run)
    settings = run.solver_settings()
    app = create_app(solve(model, settings), solve_planner(model, settings))
    logger.info("Serving lookups on port %d", port)
    app.run(host="0.0.0.0", port=port, threaded=True)


def main(argv: Optional[list] = None) -> int:
    """
    Usage:
      python cli.py <command> <config.ini> [--output DIR] [--log-level LEVEL]
    Example:
      python cli.py solve-continuous configs/fc_pc_large_cbar.ini
      python cli.py sweep configs/discrete_r2_sweep.ini --output out/sweep
    """
    parser = argparse.ArgumentParser(description="Bonus-for-reporting bandit solvers")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in HELP.items():
        cmd = sub.add_parser(name, help=text, description=text)
        cmd.add_argument("config", help="INI configuration file")
        cmd.add_argument("--output", help="Artifact directory (overrides [output] directory)")
        cmd.add_argument("--log-level", help="Logging level (overrides [output] log_level)")
        if name == "serve":
            cmd.add_argument("--port", type=int, default=DEFAULT_PORT, help="Port to listen on")
    args = parser.parse_args(argv)

    configure_logging(args.log_level or "INFO")
    reset_metrics()
    try:
        run = RunConfig.from_file(args.config)
        if args.output:
            run.override("output", "directory", args.output)
        if args.log_level:
            run.override("output", "log_level", args.log_level.upper())
        configure_logging(run.log_level())

        if args.command == "validate":
            for line in validate(run):
                print(line)
            return 0
        if args.command == "serve":
            serve(run, args.port)
            return 0
        run_command(args.command, run)
        return 0
    except BanditBonusError as exc:
        logger.error("%s failed (%s): %s", args.command, exc.failure_type.name, exc)
        return exit_code_for(exc)
    except Exception as exc:  # noqa: BLE001
        logger.exception("%s failed unexpectedly: %s", args.command, exc)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
