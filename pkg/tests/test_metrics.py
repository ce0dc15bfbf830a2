from metrics import SolverMetrics, get_metrics, reset_metrics


def test_counters_and_summary():
    metrics = SolverMetrics()
    metrics.record_step(3)
    metrics.record_step(7)
    metrics.record_event_bisection()
    metrics.record_root_solve()
    metrics.record_paths(100, 2500)
    summary = metrics.get_summary()
    assert summary["marching"] == {"steps": 2, "substeps": 10, "max_substeps": 7, "event_bisections": 1}
    assert summary["root_solves"] == 1
    assert summary["simulation"] == {"paths": 100, "periods": 2500}


def test_stage_timer_accumulates():
    metrics = SolverMetrics()
    with metrics.timed("solve"):
        pass
    with metrics.timed("solve"):
        pass
    assert list(metrics.get_summary()["stage_seconds"]) == ["solve"]
    assert metrics.stage_seconds["solve"] >= 0.0


def test_global_reset():
    get_metrics().record_root_solve()
    reset_metrics()
    assert get_metrics().root_solves == 0
    assert get_metrics() is get_metrics()
