"""Plan stage: rule-based policy agent, risk classification, the alpha gate.

Action kinds carry a fixed risk class; only HR steps contribute their
subtype weight to the plan's weighted sum A, and a plan is gated for human
approval when A >= alpha (inclusive). The policy agent is deliberately a
small interface - formulate + rank - so a smarter agent can replace the
rule table without touching the gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError, UnknownActionError

RISK_ORDER = ("LR", "MR", "HR")

# action kind -> (risk class, HR subtype)
RISK_REGISTRY: dict[str, tuple[str, str | None]] = {
    "tune_parameter": ("LR", None),
    "clear_logs": ("LR", None),
    "increase_memory": ("MR", None),
    "restart_service": ("MR", None),
    "backup": ("MR", None),
    "scale_out": ("MR", None),
    "rotate_certificate": ("HR", "cert_mgmt"),
    "upgrade_service": ("HR", "sys_upgrade"),
    "redistribute_keys": ("HR", "key_dist"),
}

# kinds whose effects are idempotent-safe in the simulator: rollback of an
# applied step of these kinds is a recorded no-op, not a state restore
NON_INVERTIBLE_SAFE = ("restart_service", "backup", "clear_logs")

# signature kind (optionally suffixed .metric) -> candidate step lists.
# Each candidate is one plan; a REPORT_ONLY value means escalate to a human.
REPORT_ONLY = "report_only"
DEFAULT_TEMPLATES: dict[str, object] = {
    "service_down": [["restart_service"]],
    "cert_expiring": [["backup", "rotate_certificate"]],
    "level_shift.mem_mb": [["restart_service"], ["increase_memory"]],
    "range_violation.mem_mb": [["restart_service"], ["increase_memory"]],
    "range_violation.latency_ms": [["tune_parameter"]],
    "range_violation.error_rate": [["restart_service"]],
    "range_violation.cpu_pct": [["clear_logs"]],
    "range_violation.cert_days_remaining": [["backup", "rotate_certificate"]],
    "point_outlier.latency_ms": [["tune_parameter"]],
    "multivariate_drift": [["tune_parameter", "backup"]],
    "org_coupling": REPORT_ONLY,
}

# candidate impacts per template key, aligned with the candidate lists
DEFAULT_IMPACT: dict[str, list[float]] = {
    "service_down": [1.0],
    "cert_expiring": [1.0],
    "level_shift.mem_mb": [1.0, 0.8],
    "range_violation.mem_mb": [1.0, 0.8],
    "range_violation.latency_ms": [0.6],
    "range_violation.error_rate": [1.0],
    "range_violation.cpu_pct": [0.5],
    "range_violation.cert_days_remaining": [1.0],
    "point_outlier.latency_ms": [0.6],
    "multivariate_drift": [0.7],
}

DEFAULT_STEP_PARAMS: dict[str, dict] = {
    "tune_parameter": {"name": "timeout", "value": 30},
    "increase_memory": {"delta": 512},
}


def classify_risk(action_kind: str) -> tuple[str, str | None]:
    """Risk class + HR subtype for an action kind; unknown kinds fail closed."""
    entry = RISK_REGISTRY.get(action_kind)
    if entry is None:
        raise UnknownActionError(f"action kind {action_kind!r} is not in the risk registry")
    return entry


@dataclass
class ActionStep:
    step_id: str
    action_kind: str
    target: str
    params: dict
    risk_class: str
    risk_subtype: str | None
    weight: float

    def to_payload(self) -> dict:
        return {
            "step_id": self.step_id,
            "action_kind": self.action_kind,
            "target": self.target,
            "params": self.params,
            "risk_class": self.risk_class,
            "risk_subtype": self.risk_subtype,
            "weight": self.weight,
        }

    @classmethod
    def from_payload(cls, p: dict) -> "ActionStep":
        return cls(
            step_id=p["step_id"],
            action_kind=p["action_kind"],
            target=p["target"],
            params=p.get("params", {}),
            risk_class=p["risk_class"],
            risk_subtype=p.get("risk_subtype"),
            weight=p["weight"],
        )


@dataclass
class ActionPlan:
    plan_id: str
    anomaly_refs: list[str]
    steps: list[ActionStep]
    impact_estimate: float
    signature: dict
    rank_score: float = 0.0

    def hr_sum(self) -> float:
        return sum(s.weight for s in self.steps if s.risk_class == "HR")

    def to_payload(self, selected: bool) -> dict:
        return {
            "plan_id": self.plan_id,
            "anomaly_refs": self.anomaly_refs,
            "signature": self.signature,
            "steps": [s.to_payload() for s in self.steps],
            "impact_estimate": self.impact_estimate,
            "rank_score": self.rank_score,
            "selected": selected,
        }


@dataclass
class RiskAssessment:
    plan_id: str
    hr_sum: float          # the weighted sum A over HR steps
    alpha: float
    gated: bool
    per_step: list[dict] = field(default_factory=list)

    def to_payload(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "A": self.hr_sum,
            "alpha": self.alpha,
            "gated": self.gated,
            "per_step": self.per_step,
        }


class FormulationResult:
    """Either candidate plans, or a report-only / no-template escalation."""

    def __init__(self, plans: list[ActionPlan], escalate_reason: str | None = None):
        self.plans = plans
        self.escalate_reason = escalate_reason


class RuleBasedAgent:
    """Deterministic template agent: signature kind -> candidate plans."""

    def __init__(self, plan_cfg: dict, weights: dict[str, float]):
        self.templates = {**DEFAULT_TEMPLATES, **(plan_cfg.get("templates") or {})}
        self.impact = {**DEFAULT_IMPACT, **(plan_cfg.get("impact") or {})}
        self.step_params = {**DEFAULT_STEP_PARAMS, **(plan_cfg.get("step_params") or {})}
        self.risk_penalty = plan_cfg["risk_penalty"]
        self.weights = weights
        for key, template in self.templates.items():
            if template == REPORT_ONLY:
                continue
            impacts = self._impacts(key, template)
            if len(impacts) != len(template):
                raise ConfigError(f"plan.impact.{key} must list one impact per candidate")

    def _impacts(self, key: str, template: list) -> list[float]:
        return self.impact.get(key, [1.0] * len(template))

    def _template_for(self, signature: dict, metric: str | None):
        kind = signature["kind"]
        if metric is not None:
            keyed = self.templates.get(f"{kind}.{metric}")
            if keyed is not None:
                return f"{kind}.{metric}", keyed
        return kind, self.templates.get(kind)

    def formulate(self, anomaly_id: str, signature: dict, metric: str | None,
                  cycle: int) -> FormulationResult:
        """Candidate plans for one anomaly, or the escalation fallback."""
        key, template = self._template_for(signature, metric)
        if template is None:
            return FormulationResult([], escalate_reason="no_template")
        if template == REPORT_ONLY:
            return FormulationResult([], escalate_reason="report_only")
        target = signature["target"]
        impacts = self._impacts(key, template)
        plans = []
        for idx, step_kinds in enumerate(template):
            plan_id = f"p-{cycle:05d}-{anomaly_id.split('-', 2)[2]}-{idx}"
            steps = []
            for step_idx, action_kind in enumerate(step_kinds):
                risk_class, subtype = classify_risk(action_kind)
                weight = self.weights[subtype] if subtype is not None else 0.0
                steps.append(ActionStep(
                    step_id=f"{plan_id}-s{step_idx}",
                    action_kind=action_kind,
                    target=target,
                    params=dict(self.step_params.get(action_kind, {})),
                    risk_class=risk_class,
                    risk_subtype=subtype,
                    weight=weight if weight else 1.0,
                ))
            plans.append(ActionPlan(
                plan_id=plan_id,
                anomaly_refs=[anomaly_id],
                steps=steps,
                impact_estimate=impacts[idx],
                signature=signature,
            ))
        return FormulationResult(plans)

    def rank(self, plans: list[ActionPlan]) -> list[ActionPlan]:
        """Risk-penalized impact, descending; deterministic tie-breaks."""
        for plan in plans:
            plan.rank_score = plan.impact_estimate - self.risk_penalty * plan.hr_sum()
        return sorted(
            plans,
            key=lambda p: (
                -p.rank_score,
                sum(1 for s in p.steps if s.risk_class == "HR"),
                p.plan_id,
            ),
        )


def assess(plan: ActionPlan, alpha: float, weights: dict[str, float]) -> RiskAssessment:
    """Weighted HR sum vs alpha. Gate comparison is inclusive (A >= alpha)."""
    total = 0.0
    per_step = []
    for step in plan.steps:
        per_step.append({
            "step_id": step.step_id,
            "risk_class": step.risk_class,
            "risk_subtype": step.risk_subtype,
        })
        if step.risk_class == "HR":
            if step.risk_subtype not in weights:
                raise ConfigError(f"no weight configured for HR subtype {step.risk_subtype!r}")
            total += weights[step.risk_subtype]
    return RiskAssessment(
        plan_id=plan.plan_id,
        hr_sum=total,
        alpha=alpha,
        gated=total >= alpha,
        per_step=per_step,
    )
