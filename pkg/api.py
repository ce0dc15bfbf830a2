"""
Read-only HTTP lookups over a solved policy. Bad requests answer 400;
solver, welfare and artifact failures answer 500.
"""

from typing import Optional

from flask import Flask, request, jsonify

from continuous import PolicyMap, cutoff_summary, policy_at
from planner import PlannerSolution, mechanism_at
from failure import BanditBonusError, DomainError, FailureType
from metrics import get_metrics
from utils import _jsonable

# Failures raised by our own numerics rather than by the request
SERVER_FAILURES = {FailureType.SOLVER, FailureType.WELFARE, FailureType.IO}


def _float_arg(name: str) -> float:
    raw = request.args.get(name)
    if raw is None:
        raise DomainError(f"missing query parameter {name!r}")
    try:
        return float(raw)
    except ValueError:
        raise DomainError(f"query parameter {name!r} must be a number, got {raw!r}")


def create_app(policy: PolicyMap, planner: Optional[PlannerSolution] = None):
    """Read-only lookups over a solved policy (and planner, when given)"""
    app = Flask(__name__)

    @app.errorhandler(BanditBonusError)
    def handle_bandit_error(exc):
        status = 500 if exc.failure_type in SERVER_FAILURES else 400
        return jsonify({"error": str(exc), "failure": exc.failure_type.value}), status

    # ---------- POLICY API ----------

    @app.route("/policy", methods=["GET"])
    def get_policy():
        alpha = _float_arg("alpha")
        strategy, bonus, value = policy_at(policy, alpha)
        return jsonify(_jsonable({"alpha": alpha, "strategy": strategy.value,
                                  "bonus": bonus, "value": value})), 200

    @app.route("/cutoffs", methods=["GET"])
    def get_cutoffs():
        payload = {"monopolist": cutoff_summary(policy)}
        if planner is not None:
            payload["planner"] = {
                "alpha_sa_pc": planner.alpha_sa_pc,
                "alpha_pc_fc": planner.alpha_pc_fc,
                "alpha_fc_nb": planner.alpha_fc_nb,
            }
        return jsonify(_jsonable(payload)), 200

    # ---------- MECHANISM API ----------

    @app.route("/mechanism", methods=["GET"])
    def get_mechanism():
        if planner is None:
            return jsonify({"error": "no planner solution loaded"}), 404
        rule = mechanism_at(planner, _float_arg("alpha"), _float_arg("c"))
        return jsonify(_jsonable({"p": rule.p, "q": rule.q, "t": rule.t})), 200

    # ---------- METRICS API ----------

    @app.route("/metrics", methods=["GET"])
    def get_metrics_endpoint():
        """Get solver and simulation counters"""
        return jsonify(_jsonable(get_metrics().get_summary())), 200

    return app
