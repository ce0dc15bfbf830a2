"""
Reporting-cost distribution H on [0, cbar] and its virtual-value machinery
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from config import DEFAULT_ROOT_TOL
from failure import ArtifactIOError, DomainError, InvariantError, NegativeInputError, RangeError
from utils import bisect_root

logger = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-12
# Relative slack when checking support bounds and the cap on the information rent
SUPPORT_SLACK = 1e-12
INVERSION_POINTS = 4097


class CostKind(Enum):
    UNIFORM = "uniform"
    TABULATED = "tabulated"


@dataclass(frozen=True, eq=False)
class CostDistribution:
    """
    Reporting-cost law on [0, cbar].

    The uniform law uses closed forms throughout. A tabulated law is given as
    monotone samples (x, H(x)) and evaluated through a monotone cubic
    interpolant; its density is the interpolant's derivative floored at 1e-12.
    Immutable after construction.
    """

    kind: CostKind
    cbar: float
    cdf_table: Optional[Tuple[np.ndarray, np.ndarray]] = None
    _cdf: Optional[PchipInterpolator] = field(default=None, init=False, repr=False)
    _pdf: Optional[PchipInterpolator] = field(default=None, init=False, repr=False)
    _inverse_grid: Optional[Tuple[np.ndarray, np.ndarray]] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not (self.cbar > 0.0 and np.isfinite(self.cbar)):
            raise InvariantError(f"cost cap cbar must be positive and finite, got {self.cbar}")
        if self.kind is CostKind.TABULATED:
            if self.cdf_table is None:
                raise InvariantError("tabulated cost law requires a cdf table")
            xs, hs = self.cdf_table
            cdf = PchipInterpolator(xs, hs, extrapolate=False)
            object.__setattr__(self, "_cdf", cdf)
            object.__setattr__(self, "_pdf", cdf.derivative())
            grid = np.linspace(0.0, self.cbar, INVERSION_POINTS)
            object.__setattr__(self, "_inverse_grid", (np.clip(cdf(grid), 0.0, 1.0), grid))
            self._check_virtual_value_monotone()

    # ---------- Constructors ----------

    @classmethod
    def uniform(cls, cbar: float) -> "CostDistribution":
        return cls(CostKind.UNIFORM, float(cbar))

    @classmethod
    def from_table(cls, xs, hs) -> "CostDistribution":
        """
        Build a tabulated law from samples of H on a grid starting at 0.
        """
        xs = np.asarray(xs, dtype=float)
        hs = np.asarray(hs, dtype=float)
        if xs.ndim != 1 or xs.shape != hs.shape or xs.size < 3:
            raise InvariantError("cost table needs two equal-length columns with at least 3 rows")
        if np.any(np.diff(xs) <= 0.0):
            raise InvariantError("cost table x column must be strictly increasing")
        if np.any(np.diff(hs) <= 0.0):
            raise InvariantError("cost table H column must be strictly increasing (h > 0 on the support)")
        if abs(xs[0]) > SUPPORT_SLACK or abs(hs[0]) > 1e-9:
            raise InvariantError("cost table must start at (0, 0)")
        if abs(hs[-1] - 1.0) > 1e-9:
            raise InvariantError(f"cost table must end at H(cbar) = 1, got {hs[-1]}")
        hs = hs.copy()
        hs[0], hs[-1] = 0.0, 1.0
        return cls(CostKind.TABULATED, float(xs[-1]), (xs, hs))

    @classmethod
    def from_csv(cls, path) -> "CostDistribution":
        """
        Load a two-column CSV (x, H(x)) with a header row.
        """
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise ArtifactIOError(f"cannot read cost table {path}: {exc}") from exc
        if frame.shape[1] != 2:
            raise InvariantError(f"cost table {path} must have exactly two columns")
        logger.info("Loaded tabulated cost law from %s (%d rows)", Path(path).name, len(frame))
        return cls.from_table(frame.iloc[:, 0].to_numpy(), frame.iloc[:, 1].to_numpy())

    def _check_virtual_value_monotone(self):
        grid = np.linspace(0.0, self.cbar, 2001)
        beta = grid + self.cdf_array(grid) / self.pdf_array(grid)
        if np.any(np.diff(beta) <= 0.0):
            bad = grid[1:][np.diff(beta) <= 0.0][0]
            raise InvariantError(f"virtual value x + H/h is not increasing near x = {bad:.6g}")

    # ---------- Pointwise evaluation ----------

    def _check_support(self, x: float, what: str = "x") -> float:
        if x < -SUPPORT_SLACK * self.cbar or x > self.cbar * (1.0 + SUPPORT_SLACK):
            raise DomainError(f"{what} = {x!r} outside the cost support [0, {self.cbar}]")
        return min(max(x, 0.0), self.cbar)

    def cdf_array(self, xs) -> np.ndarray:
        xs = np.clip(np.asarray(xs, dtype=float), 0.0, self.cbar)
        if self.kind is CostKind.UNIFORM:
            return xs / self.cbar
        return np.clip(self._cdf(xs), 0.0, 1.0)

    def pdf_array(self, xs) -> np.ndarray:
        xs = np.clip(np.asarray(xs, dtype=float), 0.0, self.cbar)
        if self.kind is CostKind.UNIFORM:
            return np.full_like(xs, 1.0 / self.cbar)
        return np.maximum(self._pdf(xs), DENSITY_FLOOR)

    def eval(self, x: float) -> Tuple[float, float]:
        """Return (H(x), h(x))"""
        x = self._check_support(x)
        if self.kind is CostKind.UNIFORM:
            return x / self.cbar, 1.0 / self.cbar
        return float(self.cdf_array(x)), float(self.pdf_array(x))

    def virtual_value(self, x: float) -> float:
        """beta(x) = x + H(x)/h(x)"""
        x = self._check_support(x)
        if self.kind is CostKind.UNIFORM:
            return 2.0 * x
        cdf, pdf = self.eval(x)
        return x + cdf / pdf

    def info_rent(self, x: float) -> float:
        """H(x)^2 / h(x)"""
        x = self._check_support(x)
        if self.kind is CostKind.UNIFORM:
            return x * x / self.cbar
        cdf, pdf = self.eval(x)
        return cdf * cdf / pdf

    def truncated_cost_mass(self, b: float) -> float:
        """Integral of x dH(x) over [0, b]"""
        b = self._check_support(b, "b")
        if self.kind is CostKind.UNIFORM:
            return b * b / (2.0 * self.cbar)
        if b == 0.0:
            return 0.0
        value, _ = quad(lambda x: x * float(self.pdf_array(x)), 0.0, b, epsabs=1e-12, limit=200)
        return value

    def mean(self) -> float:
        return self.truncated_cost_mass(self.cbar)

    # ---------- Inverses ----------

    def virtual_inverse(self, y: float) -> float:
        """
        Unique x in [0, cbar] with beta(x) = y; beyond beta(cbar) the
        extended rule beta(x) = x applies and y itself is returned.
        """
        if y < 0.0:
            raise NegativeInputError(f"virtual_inverse needs y >= 0, got {y!r}; clamp interior bonuses first")
        top = self.virtual_value(self.cbar)
        if y > top:
            return y
        if self.kind is CostKind.UNIFORM:
            return y / 2.0
        return bisect_root(lambda x: self.virtual_value(x) - y, 0.0, self.cbar,
                           xtol=DEFAULT_ROOT_TOL, what="virtual value inverse")

    def info_rent_inverse(self, y: float) -> float:
        """
        Unique x in [0, cbar] with H(x)^2/h(x) = y.
        Raises RangeError above info_rent(cbar), which signals the capped regime.
        """
        if y < 0.0:
            raise NegativeInputError(f"info_rent_inverse needs y >= 0, got {y!r}")
        cap = self.info_rent(self.cbar)
        if y > cap * (1.0 + SUPPORT_SLACK):
            raise RangeError(f"information rent {y!r} exceeds its value {cap!r} at the cost cap")
        y = min(y, cap)
        if self.kind is CostKind.UNIFORM:
            return float(np.sqrt(self.cbar * y))
        return bisect_root(lambda x: self.info_rent(x) - y, 0.0, self.cbar,
                           xtol=DEFAULT_ROOT_TOL, what="information rent inverse")

    # ---------- Planner reporting surplus ----------

    def reporting_surplus(self, cutoff: float) -> float:
        """
        Integral of (C - c) dH(c) over [0, C]; linear (C - E[c]) above cbar.
        """
        if cutoff <= 0.0:
            return 0.0
        if cutoff >= self.cbar:
            return cutoff - self.mean()
        if self.kind is CostKind.UNIFORM:
            return cutoff * cutoff / (2.0 * self.cbar)
        return cutoff * self.eval(cutoff)[0] - self.truncated_cost_mass(cutoff)

    def reporting_surplus_inverse(self, y: float) -> float:
        if y <= 0.0:
            return 0.0
        top = self.cbar - self.mean()
        if y >= top:
            return y + self.mean()
        if self.kind is CostKind.UNIFORM:
            return float(np.sqrt(2.0 * self.cbar * y))
        return bisect_root(lambda c: self.reporting_surplus(c) - y, 0.0, self.cbar,
                           xtol=DEFAULT_ROOT_TOL, what="reporting cutoff")

    # ---------- Sampling ----------

    def quantile(self, u) -> np.ndarray:
        """Inverse CDF at probabilities u in [0, 1]"""
        u = np.asarray(u, dtype=float)
        if self.kind is CostKind.UNIFORM:
            return u * self.cbar
        probs, grid = self._inverse_grid
        return np.interp(u, probs, grid)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw iid reporting costs by inverse-CDF sampling"""
        return self.quantile(rng.random(size))

    def describe(self) -> dict:
        return {"kind": self.kind.value, "cbar": self.cbar}
