"""
Solver and simulation counters
"""

import time
from typing import Dict, Optional
from threading import RLock
from collections import defaultdict


class SolverMetrics:
    """
    Tracks work done by the ODE marchers, root finders and simulators.
    Safe to update from simulation worker threads.
    """

    def __init__(self):
        # RLock avoids deadlocks when aggregated getters call other getters
        self.lock = RLock()

        # Marching counters
        self.ode_steps = 0
        self.substeps = 0
        self.max_substeps_seen = 0
        self.event_bisections = 0

        # Root finding
        self.root_solves = 0

        # Simulation counters
        self.sim_paths = 0
        self.sim_periods = 0

        # Wall time per named stage (seconds)
        self.stage_seconds: Dict[str, float] = defaultdict(float)

    def record_step(self, substeps: int):
        """Record one accepted outer step and the substeps it used"""
        with self.lock:
            self.ode_steps += 1
            self.substeps += substeps
            if substeps > self.max_substeps_seen:
                self.max_substeps_seen = substeps

    def record_event_bisection(self):
        with self.lock:
            self.event_bisections += 1

    def record_root_solve(self):
        with self.lock:
            self.root_solves += 1

    def record_paths(self, n_paths: int, periods: int):
        """Record a finished simulation block"""
        with self.lock:
            self.sim_paths += n_paths
            self.sim_periods += periods

    def timed(self, stage: str) -> "_StageTimer":
        """Context manager adding elapsed wall time to a named stage"""
        return _StageTimer(self, stage)

    def get_summary(self) -> Dict:
        """Get a summary of all counters"""
        with self.lock:
            return {
                "marching": {
                    "steps": self.ode_steps,
                    "substeps": self.substeps,
                    "max_substeps": self.max_substeps_seen,
                    "event_bisections": self.event_bisections,
                },
                "root_solves": self.root_solves,
                "simulation": {
                    "paths": self.sim_paths,
                    "periods": self.sim_periods,
                },
                "stage_seconds": dict(self.stage_seconds),
            }

    def reset(self):
        """Reset all counters"""
        with self.lock:
            self.ode_steps = 0
            self.substeps = 0
            self.max_substeps_seen = 0
            self.event_bisections = 0
            self.root_solves = 0
            self.sim_paths = 0
            self.sim_periods = 0
            self.stage_seconds.clear()


class _StageTimer:
    def __init__(self, metrics: SolverMetrics, stage: str):
        self.metrics = metrics
        self.stage = stage
        self.start = 0.0

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        with self.metrics.lock:
            self.metrics.stage_seconds[self.stage] += time.perf_counter() - self.start
        return False


# Global metrics instance (shared across modules)
_global_metrics: Optional[SolverMetrics] = None


def get_metrics() -> SolverMetrics:
    """Get the global metrics instance"""
    global _global_metrics
    if _global_metrics is None:
        _global_metrics = SolverMetrics()
    return _global_metrics


def reset_metrics():
    """Reset the global metrics instance"""
    global _global_metrics
    if _global_metrics is not None:
        _global_metrics.reset()
