"""
Fixed-step RK4 marcher on the belief axis.

Each outer step of length grid_step is split into substeps when the
right-hand side is stiff in the value (the Bellman wedge vanishes at every
pasting point, which sends the derivative of the recovered bonus to
infinity). Free boundaries are located by bisecting on the length of a
partial step.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from config import SolverSettings
from failure import SingularityError, StepRejectedError
from metrics import get_metrics
from utils import bisect_root

logger = logging.getLogger(__name__)

Rhs = Callable[[float, float], float]
Event = Callable[[float, float], float]

FLOOR_SLACK = 1e-9


@dataclass(frozen=True)
class Segment:
    """Nodes of one marched curve piece; event_alpha is None if no event fired"""
    alphas: np.ndarray
    values: np.ndarray
    event_alpha: Optional[float] = None

    @property
    def end_alpha(self) -> float:
        return float(self.alphas[-1])

    @property
    def end_value(self) -> float:
        return float(self.values[-1])

    def value_at(self, alpha):
        return np.interp(alpha, self.alphas, self.values)


class Marcher:
    """
    Integrates y' = rhs(alpha, y) upward in alpha.

    floor(alpha) is an optional lower bound on accepted states; an accepted
    value more than 1e-9 below it means the march drifted off the pasting
    branch and the step is rejected.
    """

    def __init__(self, rhs: Rhs, settings: SolverSettings,
                 floor: Optional[Callable[[float], float]] = None, name: str = "curve"):
        self.rhs = rhs
        self.settings = settings
        self.floor = floor
        self.name = name
        self._max_seen = 1

    def _substeps(self, alpha: float, y: float, h: float) -> int:
        delta = 1e-7 * (1.0 + abs(y))
        jac = (self.rhs(alpha, y + delta) - self.rhs(alpha, y)) / delta
        if not math.isfinite(jac):
            return self.settings.max_substeps
        n = int(math.ceil(h * abs(jac) / 2.0))
        return min(max(n, 1), self.settings.max_substeps)

    def _rk4(self, alpha: float, y: float, h: float, n: int) -> float:
        dh = h / n
        f = self.rhs
        for _ in range(n):
            k1 = f(alpha, y)
            k2 = f(alpha + dh / 2.0, y + dh * k1 / 2.0)
            k3 = f(alpha + dh / 2.0, y + dh * k2 / 2.0)
            k4 = f(alpha + dh, y + dh * k3)
            y = y + dh * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            alpha += dh
        return y

    def advance(self, alpha: float, y: float, h: float) -> float:
        """One outer step of length h with stiffness-scaled substeps"""
        n = self._substeps(alpha, y, h)
        if n > self._max_seen:
            self._max_seen = n
            logger.debug("%s: %d substeps at alpha=%.6f", self.name, n, alpha)
        y_new = self._rk4(alpha, y, h, n)
        get_metrics().record_step(n)
        return y_new

    def _accept(self, alpha: float, y: float):
        if not math.isfinite(y):
            raise StepRejectedError(f"{self.name}: non-finite value at alpha={alpha:.8f}")
        if self.floor is not None and y < self.floor(alpha) - FLOOR_SLACK:
            raise StepRejectedError(
                f"{self.name}: value {y:.10g} fell below the pasting branch "
                f"{self.floor(alpha):.10g} at alpha={alpha:.8f}"
            )

    def march(self, alpha0: float, y0: float, alpha_stop: float,
              event: Optional[Event] = None) -> Segment:
        """
        March from (alpha0, y0) to alpha_stop. When event is given the march
        ends at its first crossing from positive to non-positive, located by
        bisection to event_tol and appended as the final node.
        """
        if not (0.0 < alpha0 < 1.0):
            raise SingularityError(f"{self.name}: launch point alpha={alpha0!r} is singular")
        if not (alpha0 < alpha_stop < 1.0):
            raise SingularityError(f"{self.name}: stop point alpha={alpha_stop!r} must lie in ({alpha0}, 1)")

        step = self.settings.grid_step
        alphas = [alpha0]
        values = [y0]
        if event is not None and event(alpha0, y0) <= 0.0:
            return Segment(np.array(alphas), np.array(values), alpha0)

        alpha, y = alpha0, y0
        while alpha_stop - alpha > 1e-14:
            h = min(step, alpha_stop - alpha)
            y_new = self.advance(alpha, y, h)
            self._accept(alpha + h, y_new)
            if event is not None and event(alpha + h, y_new) <= 0.0:
                tau = self._locate(event, alpha, y, h)
                y_hit = self.advance(alpha, y, tau) if tau > 0.0 else y
                alphas.append(alpha + tau)
                values.append(y_hit)
                logger.debug("%s: event at alpha=%.10f after %d steps", self.name, alpha + tau, len(alphas))
                return Segment(np.array(alphas), np.array(values), alpha + tau)
            alpha, y = alpha + h, y_new
            alphas.append(alpha)
            values.append(y)
        return Segment(np.array(alphas), np.array(values), None)

    def _locate(self, event: Event, alpha: float, y: float, h: float) -> float:
        metrics = get_metrics()

        def crossing(tau: float) -> float:
            metrics.record_event_bisection()
            if tau <= 0.0:
                return event(alpha, y)
            return event(alpha + tau, self._rk4(alpha, y, tau, self._substeps(alpha, y, tau)))

        # event > 0 at tau = 0 and <= 0 at tau = h
        return bisect_root(crossing, 0.0, h, xtol=self.settings.event_tol, what=f"{self.name} event")
