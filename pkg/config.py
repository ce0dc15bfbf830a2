"""
Run configuration (INI sections, solver and simulation defaults)
"""

import configparser
import io
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

from failure import ConfigError

# Solver defaults
DEFAULT_GRID_STEP = 1e-4  # RK4 step on the belief axis
DEFAULT_STORE_POINTS = 2001  # Points on the stored policy grid
DEFAULT_LAUNCH_OFFSET = 1e-6  # Distance from a pasting point to the first integration node
DEFAULT_EVENT_TOL = 1e-10  # Bisection tolerance for free-boundary location
DEFAULT_ROOT_TOL = 1e-12  # Bisection tolerance for inverses and fixed points
DEFAULT_MAX_SUBSTEPS = 4000  # Cap on stiffness substeps per outer step
DEFAULT_STORE_MARGIN = 0.05  # Stored grid starts this far below the SA/PC cutoff
DEFAULT_STORE_TOP = 0.999

# Simulation defaults
DEFAULT_DT = 1e-3
DEFAULT_SIM_HORIZON = 40.0
DEFAULT_N_PATHS = 100000
DEFAULT_SEED = 20240601
DEFAULT_BLOCK_SIZE = 10000
DEFAULT_THREADS = 1
DEFAULT_TRACE_PATHS = 0

# Output defaults
DEFAULT_OUTPUT_DIR = "out"
DEFAULT_LOG_LEVEL = "INFO"

THREADS_ENV_VAR = "BANDIT_BONUS_THREADS"

MODEL_SECTIONS = ("discrete", "continuous")

# Allowed keys per section; anything else is rejected at load time
KNOWN_KEYS: Dict[str, tuple] = {
    "discrete": ("horizon", "discount", "r2", "r1_law", "r1_upper", "rho", "r1_csv", "er1", "emax"),
    "continuous": (
        "discount_rate", "arrival_rate", "lump_value", "safe_flow", "safe_share",
        "assume_large_cbar",
    ),
    "cost": ("kind", "cbar", "csv"),
    "solver": ("grid_step", "store_points", "launch_offset", "event_tol", "root_tol", "max_substeps"),
    "sim": (
        "dt", "horizon", "n_paths", "master_seed", "alpha0", "tail_correction",
        "block_size", "threads", "trace_paths", "strategy",
    ),
    "sweep": ("parameter", "start", "stop", "num", "share"),
    "mechanism": ("alpha_points", "cost_points"),
    "output": ("directory", "log_level"),
}


@dataclass(frozen=True)
class SolverSettings:
    """
    Numerical controls shared by the continuous and planner marchers.
    """
    grid_step: float = DEFAULT_GRID_STEP
    store_points: int = DEFAULT_STORE_POINTS
    launch_offset: float = DEFAULT_LAUNCH_OFFSET
    event_tol: float = DEFAULT_EVENT_TOL
    root_tol: float = DEFAULT_ROOT_TOL
    max_substeps: int = DEFAULT_MAX_SUBSTEPS

    def __post_init__(self):
        if not (0.0 < self.grid_step < 0.1):
            raise ConfigError(f"solver.grid_step must lie in (0, 0.1), got {self.grid_step}")
        if self.store_points < 3:
            raise ConfigError("solver.store_points must be at least 3")
        if not (0.0 < self.launch_offset < self.grid_step):
            raise ConfigError("solver.launch_offset must be positive and below grid_step")
        if self.event_tol <= 0.0 or self.root_tol <= 0.0:
            raise ConfigError("solver tolerances must be positive")
        if self.max_substeps < 1:
            raise ConfigError("solver.max_substeps must be at least 1")


class RunConfig:
    """
    Sectioned key=value configuration for one CLI run.
    Holds the parsed INI and typed accessors with the module defaults.
    """

    def __init__(self, parser: configparser.ConfigParser, source: str = "<text>"):
        self.parser = parser
        self.source = source
        self._check_sections()

    # ---------- Loading ----------

    @classmethod
    def from_text(cls, text: str, source: str = "<text>") -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {source}: {exc}") from exc
        return cls(parser, source)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        return cls.from_text(text, source=str(path))

    def _check_sections(self):
        present = [s for s in MODEL_SECTIONS if self.parser.has_section(s)]
        if len(present) != 1:
            raise ConfigError(
                f"{self.source}: exactly one model section ([discrete] or [continuous]) required, "
                f"found {present or 'none'}"
            )
        for section in self.parser.sections():
            if section not in KNOWN_KEYS:
                raise ConfigError(f"{self.source}: unknown section [{section}]")
            unknown = set(self.parser[section].keys()) - set(KNOWN_KEYS[section])
            if unknown:
                raise ConfigError(
                    f"{self.source}: unknown key(s) in [{section}]: {', '.join(sorted(unknown))}"
                )

    # ---------- Typed accessors ----------

    @property
    def model_kind(self) -> str:
        return "discrete" if self.parser.has_section("discrete") else "continuous"

    def has(self, section: str, key: str) -> bool:
        return self.parser.has_option(section, key)

    def get_str(self, section: str, key: str, default: Optional[str] = None) -> Optional[str]:
        if self.has(section, key):
            return self.parser.get(section, key).strip()
        return default

    def get_float(self, section: str, key: str, default: Optional[float] = None) -> Optional[float]:
        if not self.has(section, key):
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number, got {raw!r}")

    def get_int(self, section: str, key: str, default: Optional[int] = None) -> Optional[int]:
        if not self.has(section, key):
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be an integer, got {raw!r}")

    def get_bool(self, section: str, key: str, default: bool = False) -> bool:
        if not self.has(section, key):
            return default
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a boolean")

    def require_float(self, section: str, key: str) -> float:
        value = self.get_float(section, key)
        if value is None:
            raise ConfigError(f"{self.source}: missing [{section}] {key}")
        return value

    def horizon(self) -> float:
        """Discrete horizon T: a positive integer or inf"""
        raw = self.get_str("discrete", "horizon")
        if raw is None:
            raise ConfigError(f"{self.source}: missing [discrete] horizon")
        if raw.lower() in ("inf", "infinite", "infinity"):
            return math.inf
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"[discrete] horizon must be a positive integer or inf, got {raw!r}")
        if value < 1:
            raise ConfigError("[discrete] horizon must be at least 1")
        return value

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(
            grid_step=self.get_float("solver", "grid_step", DEFAULT_GRID_STEP),
            store_points=self.get_int("solver", "store_points", DEFAULT_STORE_POINTS),
            launch_offset=self.get_float("solver", "launch_offset", DEFAULT_LAUNCH_OFFSET),
            event_tol=self.get_float("solver", "event_tol", DEFAULT_EVENT_TOL),
            root_tol=self.get_float("solver", "root_tol", DEFAULT_ROOT_TOL),
            max_substeps=self.get_int("solver", "max_substeps", DEFAULT_MAX_SUBSTEPS),
        )

    def threads(self) -> int:
        """Simulation worker count; the environment variable wins"""
        env = os.environ.get(THREADS_ENV_VAR)
        if env is not None and env.strip():
            try:
                value = int(env)
            except ValueError:
                raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got {env!r}")
        else:
            value = self.get_int("sim", "threads", DEFAULT_THREADS)
        if value < 1:
            raise ConfigError("thread count must be at least 1")
        return value

    def output_dir(self) -> Path:
        return Path(self.get_str("output", "directory", DEFAULT_OUTPUT_DIR))

    def log_level(self) -> str:
        return self.get_str("output", "log_level", DEFAULT_LOG_LEVEL).upper()

    def override(self, section: str, key: str, value: str):
        """Set a value from the command line; recorded in the resolved config"""
        if not self.parser.has_section(section):
            self.parser.add_section(section)
        self.parser.set(section, key, value)

    # ---------- Resolved form ----------

    def resolved(self) -> "RunConfig":
        """
        Copy with solver, sim and output defaults filled in and the
        effective thread count recorded.
        """
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_dict({s: dict(self.parser[s]) for s in self.parser.sections()})
        settings = self.solver_settings()
        defaults = {
            "solver": {
                "grid_step": settings.grid_step,
                "store_points": settings.store_points,
                "launch_offset": settings.launch_offset,
                "event_tol": settings.event_tol,
                "root_tol": settings.root_tol,
                "max_substeps": settings.max_substeps,
            },
            "sim": {
                "dt": DEFAULT_DT,
                "horizon": DEFAULT_SIM_HORIZON,
                "n_paths": DEFAULT_N_PATHS,
                "master_seed": DEFAULT_SEED,
                "tail_correction": "true",
                "block_size": DEFAULT_BLOCK_SIZE,
                "trace_paths": DEFAULT_TRACE_PATHS,
            },
            "output": {"directory": DEFAULT_OUTPUT_DIR, "log_level": DEFAULT_LOG_LEVEL},
        }
        for section, values in defaults.items():
            if not parser.has_section(section):
                parser.add_section(section)
            for key, value in values.items():
                if not parser.has_option(section, key):
                    parser.set(section, key, repr(value) if isinstance(value, float) else str(value))
        parser.set("sim", "threads", str(self.threads()))
        return RunConfig(parser, self.source)

    def to_ini(self) -> str:
        buffer = io.StringIO()
        self.parser.write(buffer)
        return buffer.getvalue()

    def as_dict(self) -> Dict[str, Dict[str, str]]:
        return {s: dict(self.parser[s]) for s in self.parser.sections()}
