"""The control loop: sense -> monitor -> analyze -> plan -> gate/execute.

One cycle per tick, cycle index == tick index. Queued human decisions are
consumed at cycle start (before expiry, so a decision racing its own ttl
wins), detection runs at window boundaries, and every stage transition is
journaled before the next one runs - the journal is the ground truth the
gateway, the replay tool and the audit all read.
"""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass

from .config import METRICS
from .detectors import AnalyzeStage, AnomalyReport
from .errors import ApprovalStateError, UnknownTargetError
from .executor import ExecutionResult, Executor
from .knowledge import CycleRecord, KnowledgeBase, signature_key
from .planner import RuleBasedAgent, assess
from .simenv import SimEnv
from .telemetry import MetricSample, Monitor


@dataclass
class Decision:
    request_id: str
    decision: str
    decider: str


@dataclass
class EscalationAck:
    escalation_id: str
    decider: str


class Controller:
    def __init__(self, cfg: dict, env: SimEnv, kb: KnowledgeBase):
        self.cfg = cfg
        self.env = env
        self.kb = kb
        self.window_len = cfg["monitor"]["window_len"]
        self.monitor = Monitor(
            window_len=self.window_len,
            known_services=set(env.services),
            filters=cfg["monitor"]["filters"],
            buffer_factor=cfg["monitor"]["buffer_factor"],
        )
        self.analyze = AnalyzeStage(cfg, cfg["goals"])
        self.agent = RuleBasedAgent(cfg["plan"], cfg["plan"]["weights"])
        self.executor = Executor(
            kb, env,
            approval_ttl=cfg["execute"]["approval_ttl"],
            guard_l=cfg["execute"]["loop_guard"]["L"],
            guard_n=cfg["execute"]["loop_guard"]["N"],
        )
        self.alpha = cfg["plan"]["alpha"]
        self.weights = cfg["plan"]["weights"]
        self.priorities = list(cfg["goals"].get("priorities", METRICS))
        self.decisions_in: queue.Queue = queue.Queue()
        self.acks_in: queue.Queue = queue.Queue()
        self._snapshot_lock = threading.Lock()
        self._snapshot: dict = {"tick": 0, "services": {}, "approvals": [], "escalations": []}
        self.decision_results: dict[str, str] = {}

    # -- gateway-facing -----------------------------------------------------

    def submit_decision(self, request_id: str, decision: str, decider: str) -> None:
        self.decisions_in.put(Decision(request_id, decision, decider))

    def submit_ack(self, escalation_id: str, decider: str) -> None:
        self.acks_in.put(EscalationAck(escalation_id, decider))

    def snapshot(self) -> dict:
        with self._snapshot_lock:
            return dict(self._snapshot)

    def _publish_snapshot(self) -> None:
        snap = {
            "tick": self.env.tick_index,
            "cycle": self.env.tick_index,
            "services": self.env.state_payload(),
            "approvals": [dict(r) for r in self.kb.approvals.values()],
            "escalations": [dict(e) for e in self.kb.escalations.values()],
            "plans": {pid: p for pid, p in self.kb.plans.items()},
        }
        with self._snapshot_lock:
            self._snapshot = snap

    # -- the loop -------------------------------------------------------------

    def run(self, ticks: int, on_cycle=None) -> dict:
        """Run N cycles; returns the run summary with the final state digest."""
        if ticks < 1:
            raise ValueError("ticks must be >= 1")
        for _ in range(ticks):
            record = self.run_cycle()
            if on_cycle is not None:
                on_cycle(record)
        counts = self.kb.counts
        return {
            "ticks": self.env.tick_index,
            "anomalies": counts.get("anomaly", 0),
            "plans": counts.get("plan", 0),
            "executions": len([s for s in self.kb.executions.values() if s == "completed"]),
            "escalations": counts.get("escalation", 0),
            "approvals_pending": len(self.kb.pending_approvals()),
            "digest": self.kb.digest(),
        }

    def run_cycle(self) -> CycleRecord:
        cycle = self.env.tick()
        tick = cycle
        record = CycleRecord(cycle=cycle, started_tick=tick, ended_tick=tick)

        self._consume_decisions(record, cycle, tick)
        self._consume_acks(cycle, tick)
        self.executor.expire_approvals(tick, cycle)

        sensed = self.env.sense()
        self.monitor.ingest(sensed)

        if tick >= self.window_len and tick % self.window_len == 0:
            start = tick - self.window_len
            aggregates, events = self.monitor.close_window(start)
            self.kb.append(cycle, tick, "telemetry_summary", {
                "window": [start, tick],
                "aggregates": [a.to_payload() for a in aggregates],
                "collaboration_events": len(events),
            })
            reports = self.analyze.on_window_close(aggregates, events, cycle, tick)
            record.anomalies_found = len(reports)
            for report in self._ordered(reports):
                self._handle_anomaly(report, record, cycle, tick)

        # feed streaming detectors after the close so boundary-tick samples
        # latch into the next window, matching the aggregate bucketing
        for sample in sensed:
            if isinstance(sample, MetricSample):
                self.analyze.observe_sample(sample.service_id, sample.metric, sample.value)

        self.kb.append(cycle, tick, "feedback", record.to_payload())
        self._publish_snapshot()
        return record

    def _ordered(self, reports: list[AnomalyReport]) -> list[AnomalyReport]:
        def key(r: AnomalyReport):
            try:
                pri = self.priorities.index(r.metric)
            except ValueError:
                pri = len(self.priorities)
            return (pri, r.signature["kind"], r.signature["target"])
        return sorted(reports, key=key)

    def _handle_anomaly(self, report: AnomalyReport, record: CycleRecord,
                        cycle: int, tick: int) -> None:
        self.kb.append(cycle, tick, "anomaly", report.to_payload())
        sig = signature_key(report.signature)
        target = report.signature["target"]

        if sig in self.kb.suppressed_signatures:
            self._skip(report, "suppressed_signature", cycle, tick)
            return
        if target in self.kb.frozen_services:
            self._skip(report, "frozen_service", cycle, tick)
            return
        if sig in self.kb.pending_signature_keys():
            self._skip(report, "approval_pending", cycle, tick)
            return

        if self.executor.loop_guard(report.signature, cycle) == "suppressed":
            self._escalate(report, "loop_guard", record, cycle, tick)
            return

        formulation = self.agent.formulate(report.id, report.signature, report.metric, cycle)
        if formulation.escalate_reason is not None:
            self._escalate(report, formulation.escalate_reason, record, cycle, tick)
            return

        ranked = self.agent.rank(formulation.plans)
        for i, plan in enumerate(ranked):
            self.kb.append(cycle, tick, "plan", plan.to_payload(selected=(i == 0)))
        top = ranked[0]
        assessment = assess(top, self.alpha, self.weights)
        self.kb.append(cycle, tick, "assessment", assessment.to_payload())

        try:
            outcome = self.executor.execute(top, assessment, cycle, tick)
        except UnknownTargetError as exc:
            self._escalate(report, "unknown_target", record, cycle, tick, detail=str(exc))
            return
        if isinstance(outcome, ExecutionResult) and outcome.final_status == "completed":
            record.plans_executed += 1

    def _skip(self, report: AnomalyReport, reason: str, cycle: int, tick: int) -> None:
        self.kb.append(cycle, tick, "feedback", {
            "event": "skipped",
            "reason": reason,
            "anomaly_id": report.id,
            "signature": report.signature,
        })

    def _escalate(self, report: AnomalyReport, reason: str, record: CycleRecord,
                  cycle: int, tick: int, detail: str | None = None) -> None:
        escalation_id = f"esc-{cycle:05d}-{len(self.kb.escalations):03d}"
        payload = {
            "escalation_id": escalation_id,
            "reason": reason,
            "service_id": report.signature["target"],
            "signature": report.signature,
            "anomaly_id": report.id,
        }
        if detail is not None:
            payload["detail"] = detail
        self.kb.append(cycle, tick, "escalation", payload)
        record.escalations += 1

    def _consume_decisions(self, record: CycleRecord, cycle: int, tick: int) -> None:
        while True:
            try:
                decision = self.decisions_in.get_nowait()
            except queue.Empty:
                return
            try:
                result = self.executor.resolve_approval(
                    decision.request_id, decision.decision, decision.decider, cycle, tick,
                )
            except ApprovalStateError as exc:
                self.decision_results[decision.request_id] = f"error: {exc}"
                continue
            except UnknownTargetError as exc:
                self.decision_results[decision.request_id] = f"error: {exc}"
                continue
            self.decision_results[decision.request_id] = result.final_status
            if result.final_status == "completed":
                record.plans_executed += 1

    def _consume_acks(self, cycle: int, tick: int) -> None:
        while True:
            try:
                ack = self.acks_in.get_nowait()
            except queue.Empty:
                return
            esc = self.kb.escalations.get(ack.escalation_id)
            if esc is None or esc.get("acked"):
                continue
            self.kb.append(cycle, tick, "feedback", {
                "event": "escalation_ack",
                "escalation_id": ack.escalation_id,
                "decider": ack.decider,
            })


def build_controller(cfg: dict, scenario: dict) -> Controller:
    env = SimEnv(
        scenario,
        seed=cfg["sim"]["seed"],
        noise_amplitude=cfg["sim"]["noise_amplitude"],
        propagation_coeff=cfg["sim"]["propagation_coeff"],
        down_error_floor=cfg["sim"]["down_error_floor"],
        upgrade_downtime=cfg["sim"]["upgrade_downtime"],
    )
    kb = KnowledgeBase(cfg["kb"]["journal_path"], digest_algo=cfg["kb"]["digest_algo"])
    return Controller(cfg, env, kb)
