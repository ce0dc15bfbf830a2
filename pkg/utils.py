"""
Shared utility functions
"""

import json
import math
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd
from scipy.optimize import bisect

from config import DEFAULT_ROOT_TOL
from failure import ArtifactIOError, NoRootError
from metrics import get_metrics

SIGNIFICANT_DIGITS = 12
FLOAT_FORMAT = f"%.{SIGNIFICANT_DIGITS}g"


def bisect_root(
    func: Callable[[float], float],
    lo: float,
    hi: float,
    xtol: float = DEFAULT_ROOT_TOL,
    what: str = "root",
) -> float:
    """
    Bisection on a bracketing interval [lo, hi].
    Returns an endpoint directly when it is already a root.
    Raises NoRootError when the bracket does not change sign.
    """
    f_lo = func(lo)
    if f_lo == 0.0:
        return lo
    f_hi = func(hi)
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoRootError(
            f"no sign change for {what} on [{lo:.6g}, {hi:.6g}]"
        )
    get_metrics().record_root_solve()
    return bisect(func, lo, hi, xtol=xtol, maxiter=400)


def discount_factor_sum(r: float, horizon: float) -> float:
    """
    (1 - r^T) / (1 - r), or 1 / (1 - r) for an infinite horizon.
    """
    if math.isinf(horizon):
        return 1.0 / (1.0 - r)
    return (1.0 - r ** horizon) / (1.0 - r)


def round_sig(x: float, digits: int = SIGNIFICANT_DIGITS) -> float:
    """
    Round a float to a number of significant digits.
    """
    if x is None or not math.isfinite(x) or x == 0.0:
        return x
    return float(f"{x:.{digits}g}")


def format_float(x: float) -> str:
    return FLOAT_FORMAT % x


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return None
        return round_sig(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(payload: dict, path: Path):
    """
    Serialize a summary dict with every float at 12 significant digits.
    """
    try:
        Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def write_frame(frame: pd.DataFrame, path: Path):
    """
    Write a CSV artifact with the fixed float format.
    """
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc
