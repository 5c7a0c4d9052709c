"""Execute stage: actuation, the approval gate, rollback, the loop guard.

Gated plans never touch an actuator - they become pending ApprovalRequests
and wait for a human decision (or expiry). Ungated and approved plans apply
their steps strictly in order; the executor snapshots the targeted services
first, and a failing step triggers rollback of everything applied so far, in
reverse order. Steps of idempotent-safe kinds roll back as recorded no-ops;
everything else restores the exact state fields the actuator reported
touching. A failing inverse halts rollback, journals a rollback_failed
escalation and freezes the service for automatic planning until a human
acknowledges.

The loop guard is the self-harm brake: a signature that keeps coming back
right after we remediate it (L occurrences within N cycles, each earlier one
followed by a completed remediation) stops being remediated automatically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ApprovalStateError, UnknownTargetError
from .knowledge import KnowledgeBase, signature_key
from .planner import NON_INVERTIBLE_SAFE, ActionPlan, ActionStep, RiskAssessment
from .simenv import SimEnv


@dataclass
class ApprovalRequest:
    request_id: str
    plan_id: str
    assessment: RiskAssessment
    status: str = "pending"
    requested_tick: int = 0
    decided_tick: int | None = None
    decider: str | None = None


@dataclass
class ExecutionResult:
    plan_id: str
    applied_steps: list[str] = field(default_factory=list)
    failed_step: str | None = None
    rolled_back: bool = False
    final_status: str = "completed"


@dataclass
class LoopGuardState:
    """Signature recurrence history filtered to the guard window."""
    repeat_limit: int                     # L
    window_cycles: int                    # N
    occurrences: list[tuple[int, bool]]   # (cycle, followed by completed remediation)

    def decide(self) -> str:
        """'suppressed' when the newest occurrence completes a remediation loop."""
        if len(self.occurrences) < self.repeat_limit:
            return "proceed"
        earlier = self.occurrences[:-1]
        if earlier and all(remediated for _, remediated in earlier):
            return "suppressed"
        return "proceed"


class Executor:
    def __init__(self, kb: KnowledgeBase, env: SimEnv, approval_ttl: int,
                 guard_l: int, guard_n: int):
        self.kb = kb
        self.env = env
        self.approval_ttl = approval_ttl
        self.guard_l = guard_l
        self.guard_n = guard_n

    # -- gate + actuation ----------------------------------------------------

    def execute(self, plan: ActionPlan, assessment: RiskAssessment,
                cycle: int, tick: int) -> ExecutionResult | ApprovalRequest:
        """Apply an ungated plan, or park a gated one in the approval queue."""
        if assessment.gated:
            request_id = f"req-{cycle:05d}-{len(self.kb.approvals):03d}"
            self.kb.append(cycle, tick, "approval_request", {
                "request_id": request_id,
                "plan_id": plan.plan_id,
                "signature": plan.signature,
                "assessment": assessment.to_payload(),
            })
            return ApprovalRequest(
                request_id=request_id,
                plan_id=plan.plan_id,
                assessment=assessment,
                requested_tick=tick,
            )
        return self._apply_plan(plan, cycle, tick)

    def _apply_plan(self, plan: ActionPlan, cycle: int, tick: int) -> ExecutionResult:
        for step in plan.steps:
            if not self.env.has_service(step.target):
                raise UnknownTargetError(
                    f"plan {plan.plan_id}: step {step.step_id} targets unknown "
                    f"service {step.target}"
                )
        snapshot = self.env.snapshot([s.target for s in plan.steps])
        applied: list[tuple[ActionStep, dict]] = []
        for step in plan.steps:
            ok, reason, touched = self.env.actuate(step.action_kind, step.target, step.params)
            if not ok:
                self.kb.append(cycle, tick, "step_failed", {
                    "plan_id": plan.plan_id,
                    "step_id": step.step_id,
                    "action_kind": step.action_kind,
                    "target": step.target,
                    "reason": reason,
                }, outcome="failed")
                return self._rollback(plan, applied, step, snapshot, cycle, tick)
            self.kb.append(cycle, tick, "step_applied", {
                "plan_id": plan.plan_id,
                "step_id": step.step_id,
                "action_kind": step.action_kind,
                "target": step.target,
                "risk_class": step.risk_class,
                "touched": touched,
            }, outcome="ok")
            applied.append((step, touched))
        result = ExecutionResult(
            plan_id=plan.plan_id,
            applied_steps=[s.step_id for s, _ in applied],
            final_status="completed",
        )
        self._journal_result(result, plan, cycle, tick)
        return result

    def _rollback(self, plan: ActionPlan, applied: list[tuple[ActionStep, dict]],
                  failed_step: ActionStep, snapshot: dict,
                  cycle: int, tick: int) -> ExecutionResult:
        """Inverses in reverse order; restore semantics from the touched record."""
        restored = []
        for step, touched in reversed(applied):
            if step.action_kind in NON_INVERTIBLE_SAFE:
                restored.append({"step_id": step.step_id, "inverse": "noop"})
                continue
            ok, reason = self.env.apply_inverse(step.action_kind, step.target, touched)
            if not ok:
                self.kb.append(cycle, tick, "rollback", {
                    "plan_id": plan.plan_id,
                    "failed_step": failed_step.step_id,
                    "halted_at": step.step_id,
                    "reason": reason,
                    "restored": restored,
                }, outcome="failed")
                escalation_id = f"esc-{cycle:05d}-{len(self.kb.escalations):03d}"
                self.kb.append(cycle, tick, "escalation", {
                    "escalation_id": escalation_id,
                    "reason": "rollback_failed",
                    "plan_id": plan.plan_id,
                    "service_id": step.target,
                    "signature": plan.signature,
                }, outcome="failed")
                result = ExecutionResult(
                    plan_id=plan.plan_id,
                    applied_steps=[s.step_id for s, _ in applied],
                    failed_step=failed_step.step_id,
                    rolled_back=False,
                    final_status="rollback_failed",
                )
                self._journal_result(result, plan, cycle, tick)
                return result
            restored.append({
                "step_id": step.step_id,
                "inverse": "restore",
                "fields": touched,
                "snapshot": {k: snapshot[step.target][k] for k in touched},
            })
        self.kb.append(cycle, tick, "rollback", {
            "plan_id": plan.plan_id,
            "failed_step": failed_step.step_id,
            "restored": restored,
        }, outcome="ok")
        result = ExecutionResult(
            plan_id=plan.plan_id,
            applied_steps=[s.step_id for s, _ in applied],
            failed_step=failed_step.step_id,
            rolled_back=True,
            final_status="rolled_back",
        )
        self._journal_result(result, plan, cycle, tick)
        return result

    def _journal_result(self, result: ExecutionResult, plan: ActionPlan,
                        cycle: int, tick: int) -> None:
        self.kb.append(cycle, tick, "feedback", {
            "event": "execution_result",
            "plan_id": result.plan_id,
            "signature": plan.signature,
            "final_status": result.final_status,
            "applied_steps": result.applied_steps,
            "failed_step": result.failed_step,
            "rolled_back": result.rolled_back,
        }, outcome="ok" if result.final_status == "completed" else "failed")

    # -- approvals -------------------------------------------------------------

    def resolve_approval(self, request_id: str, decision: str, decider: str,
                         cycle: int, tick: int) -> ExecutionResult:
        """Consume a human decision; approved plans execute immediately."""
        if decision not in ("approved", "rejected"):
            raise ApprovalStateError(f"invalid decision {decision!r}")
        if not decider:
            raise ApprovalStateError("decider must be non-empty")
        request = self.kb.approvals.get(request_id)
        if request is None:
            raise ApprovalStateError(f"unknown approval request {request_id}")
        if request["status"] != "pending":
            raise ApprovalStateError(
                f"approval request {request_id} already {request['status']}"
            )
        self.kb.append(cycle, tick, "approval_decision", {
            "request_id": request_id,
            "decision": decision,
            "decider": decider,
        })
        plan = plan_from_payload(self.kb.plans[request["plan_id"]])
        if decision == "rejected":
            result = ExecutionResult(plan_id=plan.plan_id, final_status="rejected")
            self._journal_result(result, plan, cycle, tick)
            return result
        return self._apply_plan(plan, cycle, tick)

    def expire_approvals(self, now_tick: int, cycle: int) -> int:
        """Mark pending requests aged >= ttl expired (inclusive boundary)."""
        expired = 0
        for request in sorted(self.kb.pending_approvals(), key=lambda r: r["request_id"]):
            if now_tick - request["requested_tick"] >= self.approval_ttl:
                self.kb.append(cycle, now_tick, "approval_decision", {
                    "request_id": request["request_id"],
                    "decision": "expired",
                    "decider": "system:ttl",
                })
                plan = plan_from_payload(self.kb.plans[request["plan_id"]])
                result = ExecutionResult(plan_id=plan.plan_id, final_status="expired")
                self._journal_result(result, plan, cycle, now_tick)
                expired += 1
        return expired

    # -- degradation-loop guard --------------------------------------------------

    def loop_guard(self, signature: dict, cycle: int) -> str:
        """'proceed' or 'suppressed' for the signature's newest occurrence."""
        sig = signature_key(signature)
        history = self.kb.occurrences.get(sig, [])
        recent = [(c, r) for c, r in history if cycle - c <= self.guard_n]
        state = LoopGuardState(
            repeat_limit=self.guard_l,
            window_cycles=self.guard_n,
            occurrences=recent,
        )
        return state.decide()


def plan_from_payload(payload: dict) -> ActionPlan:
    return ActionPlan(
        plan_id=payload["plan_id"],
        anomaly_refs=list(payload["anomaly_refs"]),
        steps=[ActionStep.from_payload(p) for p in payload["steps"]],
        impact_estimate=payload["impact_estimate"],
        signature=payload["signature"],
        rank_score=payload.get("rank_score", 0.0),
    )
