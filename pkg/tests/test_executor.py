from __future__ import annotations

import copy

import pytest

from mapek.errors import ApprovalStateError, UnknownTargetError
from mapek.executor import ApprovalRequest, ExecutionResult, Executor, LoopGuardState
from mapek.knowledge import KnowledgeBase
from mapek.planner import ActionPlan, ActionStep, assess, classify_risk
from mapek.simenv import SimEnv

WEIGHTS = {"cert_mgmt": 1.0, "sys_upgrade": 1.0, "key_dist": 1.0}
SIG = {"kind": "cert_expiring", "target": "svc-a"}


def step(kind, target="svc-a", params=None, step_id="s0"):
    risk_class, subtype = classify_risk(kind)
    return ActionStep(step_id, kind, target, params or {}, risk_class, subtype, 1.0)


def plan(steps, plan_id="p1", signature=SIG):
    return ActionPlan(plan_id, ["a1"], steps, impact_estimate=1.0, signature=signature)


@pytest.fixture
def rig(tmp_path, basic_scenario):
    env = SimEnv(copy.deepcopy(basic_scenario))
    kb = KnowledgeBase(tmp_path / "j.ndjson")
    executor = Executor(kb, env, approval_ttl=50, guard_l=3, guard_n=10)
    return env, kb, executor


def journal_plan(kb, p):
    kb.append(1, 1, "plan", p.to_payload(selected=True))


# -- gate ---------------------------------------------------------------------

def test_gated_plan_becomes_pending_request(rig):
    env, kb, executor = rig
    p = plan([step("rotate_certificate")])
    journal_plan(kb, p)
    assessment = assess(p, alpha=1.0, weights=WEIGHTS)
    outcome = executor.execute(p, assessment, cycle=1, tick=1)
    assert isinstance(outcome, ApprovalRequest)
    assert outcome.status == "pending"
    assert kb.counts["step_applied"] == 0
    assert kb.counts["approval_request"] == 1
    assert env.services["svc-a"].cert_days == 365.0  # untouched baseline


def test_ungated_plan_applies_steps(rig):
    env, kb, executor = rig
    p = plan([step("restart_service")])
    journal_plan(kb, p)
    assessment = assess(p, alpha=1.0, weights=WEIGHTS)
    outcome = executor.execute(p, assessment, cycle=1, tick=1)
    assert isinstance(outcome, ExecutionResult)
    assert outcome.final_status == "completed"
    assert outcome.applied_steps == ["s0"]
    assert kb.counts["step_applied"] == 1


def test_unknown_target_aborts_before_any_application(rig):
    env, kb, executor = rig
    p = plan([step("restart_service"), step("restart_service", target="ghost", step_id="s1")])
    journal_plan(kb, p)
    assessment = assess(p, alpha=1.0, weights=WEIGHTS)
    with pytest.raises(UnknownTargetError):
        executor.execute(p, assessment, cycle=1, tick=1)
    assert kb.counts["step_applied"] == 0


# -- approvals -------------------------------------------------------------------

def submit_gated(kb, executor, p, cycle=1, tick=1):
    journal_plan(kb, p)
    assessment = assess(p, alpha=1.0, weights=WEIGHTS)
    return executor.execute(p, assessment, cycle, tick)


def test_approve_executes_hr_plan(rig):
    env, kb, executor = rig
    request = submit_gated(kb, executor, plan([step("rotate_certificate")]))
    env.services["svc-a"].cert_days = 10.0
    result = executor.resolve_approval(request.request_id, "approved", "human:kim",
                                       cycle=2, tick=2)
    assert result.final_status == "completed"
    assert env.services["svc-a"].cert_days == 365.0
    assert kb.approvals[request.request_id]["status"] == "approved"
    assert kb.approvals[request.request_id]["decider"] == "human:kim"


def test_reject_applies_nothing(rig):
    env, kb, executor = rig
    request = submit_gated(kb, executor, plan([step("rotate_certificate")]))
    env.services["svc-a"].cert_days = 10.0
    result = executor.resolve_approval(request.request_id, "rejected", "human:kim",
                                       cycle=2, tick=2)
    assert result.final_status == "rejected"
    assert env.services["svc-a"].cert_days == 10.0
    assert kb.counts["step_applied"] == 0


def test_double_decision_errors(rig):
    env, kb, executor = rig
    request = submit_gated(kb, executor, plan([step("rotate_certificate")]))
    executor.resolve_approval(request.request_id, "approved", "human:kim", cycle=2, tick=2)
    with pytest.raises(ApprovalStateError, match="already approved"):
        executor.resolve_approval(request.request_id, "approved", "human:kim",
                                  cycle=3, tick=3)


def test_unknown_request_errors(rig):
    _, _, executor = rig
    with pytest.raises(ApprovalStateError, match="unknown"):
        executor.resolve_approval("req-ghost", "approved", "human:kim", cycle=1, tick=1)


def test_empty_decider_rejected(rig):
    env, kb, executor = rig
    request = submit_gated(kb, executor, plan([step("rotate_certificate")]))
    with pytest.raises(ApprovalStateError, match="decider"):
        executor.resolve_approval(request.request_id, "approved", "", cycle=2, tick=2)


def test_expire_no_pending(rig):
    _, _, executor = rig
    assert executor.expire_approvals(now_tick=100, cycle=100) == 0


def test_expire_inclusive_boundary(rig):
    env, kb, executor = rig
    request = submit_gated(kb, executor, plan([step("rotate_certificate")]), cycle=1, tick=1)
    assert executor.expire_approvals(now_tick=50, cycle=50) == 0  # age 49
    assert executor.expire_approvals(now_tick=51, cycle=51) == 1  # age 50 == ttl
    assert kb.approvals[request.request_id]["status"] == "expired"
    with pytest.raises(ApprovalStateError, match="already expired"):
        executor.resolve_approval(request.request_id, "approved", "human:kim",
                                  cycle=52, tick=52)


def test_expire_only_stale_requests(rig):
    env, kb, executor = rig
    old = submit_gated(kb, executor, plan([step("rotate_certificate")], plan_id="p-old"),
                       cycle=1, tick=1)
    fresh = submit_gated(kb, executor,
                         plan([step("rotate_certificate")], plan_id="p-new",
                              signature={"kind": "cert_expiring", "target": "svc-b"}),
                         cycle=30, tick=30)
    assert executor.expire_approvals(now_tick=56, cycle=56) == 1  # ages 55 and 26
    assert kb.approvals[old.request_id]["status"] == "expired"
    assert kb.approvals[fresh.request_id]["status"] == "pending"


# -- rollback ------------------------------------------------------------------------

def test_rollback_restores_tuned_parameter(rig, basic_scenario):
    scenario = copy.deepcopy(basic_scenario)
    scenario["failure_hooks"] = [{"action_kind": "increase_memory", "target": "svc-a"}]
    env = SimEnv(scenario)
    kb = rig[1]
    executor = Executor(kb, env, approval_ttl=50, guard_l=3, guard_n=10)
    env.services["svc-a"].tunables["timeout"] = 5
    p = plan([
        step("tune_parameter", params={"name": "timeout", "value": 9}, step_id="s0"),
        step("increase_memory", step_id="s1"),
    ])
    journal_plan(kb, p)
    result = executor.execute(p, assess(p, 1.0, WEIGHTS), cycle=1, tick=1)
    assert result.final_status == "rolled_back"
    assert result.rolled_back is True
    assert result.failed_step == "s1"
    assert env.services["svc-a"].tunables["timeout"] == 5
    assert kb.counts["rollback"] == 1
    assert kb.counts["step_failed"] == 1


def test_rollback_three_step_plan_restores_first(rig, basic_scenario):
    scenario = copy.deepcopy(basic_scenario)
    scenario["failure_hooks"] = [{"action_kind": "increase_memory", "target": "svc-a"}]
    env = SimEnv(scenario)
    kb = rig[1]
    executor = Executor(kb, env, approval_ttl=50, guard_l=3, guard_n=10)
    before = env.services["svc-a"].snapshot_fields()
    p = plan([
        step("tune_parameter", params={"name": "timeout", "value": 60}, step_id="s0"),
        step("increase_memory", step_id="s1"),
        step("scale_out", step_id="s2"),
    ])
    journal_plan(kb, p)
    result = executor.execute(p, assess(p, 1.0, WEIGHTS), cycle=1, tick=1)
    assert result.final_status == "rolled_back"
    assert result.applied_steps == ["s0"]
    assert env.services["svc-a"].snapshot_fields() == before


def test_non_invertible_steps_roll_back_as_noop(rig):
    env, kb, executor = rig
    env.failure_hooks.append({"action_kind": "increase_memory", "target": "svc-a"})
    p = plan([step("restart_service", step_id="s0"), step("increase_memory", step_id="s1")])
    journal_plan(kb, p)
    result = executor.execute(p, assess(p, 1.0, WEIGHTS), cycle=1, tick=1)
    assert result.final_status == "rolled_back"
    rollback_entries = kb.query(kind="rollback")
    assert rollback_entries[0].payload["restored"] == [{"step_id": "s0", "inverse": "noop"}]


def test_inverse_failure_escalates_and_freezes(rig, basic_scenario):
    scenario = copy.deepcopy(basic_scenario)
    scenario["failure_hooks"] = [
        {"action_kind": "scale_out", "target": "svc-a"},
        {"action_kind": "tune_parameter", "target": "svc-a", "phase": "inverse"},
    ]
    env = SimEnv(scenario)
    kb = rig[1]
    executor = Executor(kb, env, approval_ttl=50, guard_l=3, guard_n=10)
    p = plan([
        step("increase_memory", step_id="s0"),
        step("tune_parameter", params={"name": "timeout", "value": 9}, step_id="s1"),
        step("scale_out", step_id="s2"),
    ])
    journal_plan(kb, p)
    result = executor.execute(p, assess(p, 1.0, WEIGHTS), cycle=1, tick=1)
    assert result.final_status == "rollback_failed"
    assert result.rolled_back is False
    escalations = kb.query(kind="escalation")
    assert len(escalations) == 1
    assert escalations[0].payload["reason"] == "rollback_failed"
    assert "svc-a" in kb.frozen_services


def test_steps_apply_exactly_once(rig):
    env, kb, executor = rig
    p = plan([step("restart_service", step_id="s0"),
              step("backup", step_id="s1")])
    journal_plan(kb, p)
    executor.execute(p, assess(p, 1.0, WEIGHTS), cycle=1, tick=1)
    seen = [(e.payload["plan_id"], e.payload["step_id"])
            for e in kb.query(kind="step_applied")]
    assert len(seen) == len(set(seen)) == 2


# -- loop guard ------------------------------------------------------------------------

def record_occurrence(kb, cycle, sig, remediated):
    kb.append(cycle, cycle, "anomaly", {"id": f"a-{cycle}", "signature": sig,
                                        "severity": "low"})
    if remediated:
        kb.append(cycle, cycle, "feedback", {
            "event": "execution_result", "plan_id": f"p-{cycle}",
            "signature": sig, "final_status": "completed",
            "applied_steps": [], "failed_step": None, "rolled_back": False,
        })


def test_guard_first_occurrence_proceeds(rig):
    _, kb, executor = rig
    sig = {"kind": "level_shift", "target": "svc-a"}
    record_occurrence(kb, 2, sig, remediated=False)
    assert executor.loop_guard(sig, cycle=2) == "proceed"


def test_guard_suppresses_third_remediated_recurrence(rig):
    _, kb, executor = rig
    sig = {"kind": "level_shift", "target": "svc-a"}
    record_occurrence(kb, 2, sig, remediated=True)
    record_occurrence(kb, 4, sig, remediated=True)
    record_occurrence(kb, 6, sig, remediated=False)
    assert executor.loop_guard(sig, cycle=6) == "suppressed"


def test_guard_broken_chain_proceeds(rig):
    _, kb, executor = rig
    sig = {"kind": "level_shift", "target": "svc-a"}
    record_occurrence(kb, 2, sig, remediated=True)
    record_occurrence(kb, 4, sig, remediated=False)  # e.g. plan rejected
    record_occurrence(kb, 6, sig, remediated=False)
    assert executor.loop_guard(sig, cycle=6) == "proceed"


def test_guard_never_suppresses_below_limit(rig):
    _, kb, executor = rig
    sig = {"kind": "level_shift", "target": "svc-a"}
    record_occurrence(kb, 2, sig, remediated=True)
    record_occurrence(kb, 4, sig, remediated=False)
    assert executor.loop_guard(sig, cycle=4) == "proceed"


def test_guard_prunes_outside_window(rig):
    _, kb, executor = rig
    sig = {"kind": "level_shift", "target": "svc-a"}
    record_occurrence(kb, 2, sig, remediated=True)
    record_occurrence(kb, 20, sig, remediated=True)
    record_occurrence(kb, 25, sig, remediated=False)
    # occurrence at cycle 2 is outside N=10; only two remain
    assert executor.loop_guard(sig, cycle=25) == "proceed"


def test_guard_state_decide_directly():
    state = LoopGuardState(repeat_limit=3, window_cycles=10,
                           occurrences=[(2, True), (4, True), (6, False)])
    assert state.decide() == "suppressed"
    state = LoopGuardState(repeat_limit=3, window_cycles=10,
                           occurrences=[(4, True), (6, False)])
    assert state.decide() == "proceed"
