"""Knowledge base: an append-only, replayable journal shared by every stage.

Every decision the loop takes - telemetry summaries, anomalies, plans, risk
assessments, approval requests and decisions, step outcomes, rollbacks,
escalations, cycle feedback - lands here as one JSON record per line, `seq`
first. The journal is the accountability record: appends are flushed and
fsynced before the loop proceeds, and a write failure halts the run rather
than buffering (fail-stop).

The in-memory views (anomalies, plans, approvals, escalations, guard
history, ...) are materialized exclusively by :meth:`KnowledgeBase.apply`,
so replaying a journal file runs the exact same code path as the live loop
and must land on the same state digest.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Any, Iterator

from .errors import JournalCorruptError, JournalWriteError

ENTRY_KINDS = (
    "telemetry_summary",
    "anomaly",
    "plan",
    "assessment",
    "approval_request",
    "approval_decision",
    "step_applied",
    "step_failed",
    "rollback",
    "escalation",
    "feedback",
)

OUTCOMES = ("ok", "failed", "n/a")


@dataclass
class JournalEntry:
    seq: int
    cycle: int
    tick: int
    kind: str
    payload: dict
    outcome: str = "n/a"

    def to_record(self) -> dict:
        # seq first: the on-disk contract fixes field order
        return {
            "seq": self.seq,
            "cycle": self.cycle,
            "tick": self.tick,
            "kind": self.kind,
            "payload": self.payload,
            "outcome": self.outcome,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "JournalEntry":
        return cls(
            seq=rec["seq"],
            cycle=rec["cycle"],
            tick=rec["tick"],
            kind=rec["kind"],
            payload=rec["payload"],
            outcome=rec.get("outcome", "n/a"),
        )


@dataclass
class CycleRecord:
    cycle: int
    started_tick: int
    ended_tick: int
    anomalies_found: int = 0
    plans_executed: int = 0
    escalations: int = 0

    def to_payload(self) -> dict:
        return {
            "event": "cycle_record",
            "cycle": self.cycle,
            "started_tick": self.started_tick,
            "ended_tick": self.ended_tick,
            "anomalies_found": self.anomalies_found,
            "plans_executed": self.plans_executed,
            "escalations": self.escalations,
        }


def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class KnowledgeBase:
    """Journal writer plus the views every stage reads.

    Single writer (the controller loop); concurrent readers go through the
    journal file and observe a consistent prefix because each append is
    durable before the loop proceeds.
    """

    def __init__(self, journal_path: str | Path, digest_algo: str = "sha256"):
        self.journal_path = Path(journal_path)
        self.digest_algo = digest_algo
        self.entries: list[JournalEntry] = []
        self.next_seq = 0
        self._fh: IO[str] | None = None

        # materialized views, maintained only via apply()
        self.counts: dict[str, int] = {k: 0 for k in ENTRY_KINDS}
        self.anomalies: dict[str, dict] = {}
        self.plans: dict[str, dict] = {}
        self.assessments: dict[str, dict] = {}
        self.approvals: dict[str, dict] = {}
        self.escalations: dict[str, dict] = {}
        self.executions: dict[str, str] = {}           # plan_id -> final_status
        self.applied_steps: dict[str, list[str]] = {}  # plan_id -> step ids
        self.suppressed_signatures: set[str] = set()
        self.frozen_services: set[str] = set()
        # signature key -> [(cycle, remediated)], the loop-guard history
        self.occurrences: dict[str, list[list]] = {}
        self.last_cycle_record: dict | None = None

    # -- writing ----------------------------------------------------------

    def open(self) -> None:
        if self._fh is not None:
            return
        self.journal_path.parent.mkdir(parents=True, exist_ok=True)
        if self.journal_path.exists() and self.next_seq == 0 and not self.entries:
            # resume an existing journal: fold it in so seq continues
            for entry in iter_journal(self.journal_path):
                self.next_seq = entry.seq + 1
                self.apply(entry)
        self._fh = self.journal_path.open("a", encoding="utf-8")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def append(self, cycle: int, tick: int, kind: str, payload: dict,
               outcome: str = "n/a") -> int:
        """Persist one entry durably and fold it into the views.

        Returns the assigned seq. Raises JournalWriteError on any storage
        failure; the caller must treat that as fatal.
        """
        if kind not in ENTRY_KINDS:
            raise ValueError(f"unknown journal entry kind: {kind}")
        if outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome: {outcome}")
        self.open()
        entry = JournalEntry(self.next_seq, cycle, tick, kind, payload, outcome)
        line = json.dumps(entry.to_record(), ensure_ascii=False)
        try:
            assert self._fh is not None
            self._fh.write(line + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
        except OSError as exc:
            raise JournalWriteError(f"journal write failed at seq {entry.seq}: {exc}") from exc
        self.next_seq += 1
        self.apply(entry)
        return entry.seq

    # -- views ------------------------------------------------------------

    def apply(self, entry: JournalEntry) -> None:
        """Fold one entry into the materialized views (live and replay path)."""
        self.entries.append(entry)
        self.counts[entry.kind] = self.counts.get(entry.kind, 0) + 1
        p = entry.payload
        kind = entry.kind

        if kind == "anomaly":
            self.anomalies[p["id"]] = {
                "signature": p["signature"],
                "cycle": entry.cycle,
                "severity": p["severity"],
            }
            sig = signature_key(p["signature"])
            self.occurrences.setdefault(sig, []).append([entry.cycle, False])
        elif kind == "plan":
            self.plans[p["plan_id"]] = p
        elif kind == "assessment":
            self.assessments[p["plan_id"]] = p
        elif kind == "approval_request":
            self.approvals[p["request_id"]] = {
                "request_id": p["request_id"],
                "plan_id": p["plan_id"],
                "signature": p["signature"],
                "assessment": p["assessment"],
                "status": "pending",
                "requested_tick": entry.tick,
                "decided_tick": None,
                "decider": None,
            }
        elif kind == "approval_decision":
            req = self.approvals.get(p["request_id"])
            if req is not None:
                req["status"] = p["decision"]
                req["decided_tick"] = entry.tick
                req["decider"] = p.get("decider")
        elif kind == "step_applied":
            self.applied_steps.setdefault(p["plan_id"], []).append(p["step_id"])
        elif kind == "escalation":
            self.escalations[p["escalation_id"]] = {**p, "acked": False}
            if p.get("reason") == "loop_guard":
                self.suppressed_signatures.add(signature_key(p["signature"]))
            if p.get("reason") == "rollback_failed":
                self.frozen_services.add(p["service_id"])
        elif kind == "feedback":
            event = p.get("event")
            if event == "execution_result":
                self.executions[p["plan_id"]] = p["final_status"]
                if p["final_status"] == "completed" and "signature" in p:
                    hist = self.occurrences.get(signature_key(p["signature"]), [])
                    if hist:
                        hist[-1][1] = True
            elif event == "escalation_ack":
                esc = self.escalations.get(p["escalation_id"])
                if esc is not None and not esc["acked"]:
                    esc["acked"] = True
                    if esc.get("reason") == "loop_guard":
                        self.suppressed_signatures.discard(signature_key(esc["signature"]))
                    if esc.get("reason") == "rollback_failed":
                        self.frozen_services.discard(esc["service_id"])
            elif event == "cycle_record":
                self.last_cycle_record = p

    def query(self, kind: str | None = None,
              cycle_range: tuple[int, int] | None = None,
              signature: dict | None = None) -> list[JournalEntry]:
        """All matching entries in seq order; empty list when nothing matches."""
        sig = signature_key(signature) if signature is not None else None
        out = []
        for e in self.entries:
            if kind is not None and e.kind != kind:
                continue
            if cycle_range is not None and not (cycle_range[0] <= e.cycle <= cycle_range[1]):
                continue
            if sig is not None:
                entry_sig = e.payload.get("signature")
                if entry_sig is None or signature_key(entry_sig) != sig:
                    continue
            out.append(e)
        return out

    def pending_approvals(self) -> list[dict]:
        return [r for r in self.approvals.values() if r["status"] == "pending"]

    def pending_signature_keys(self) -> set[str]:
        return {signature_key(r["signature"]) for r in self.pending_approvals()}

    def state(self) -> dict:
        """Snapshot of the reconstructible KB state (the digest input)."""
        return {
            "last_seq": self.next_seq - 1,
            "counts": dict(sorted(self.counts.items())),
            "anomalies": self.anomalies,
            "plans": self.plans,
            "assessments": self.assessments,
            "approvals": self.approvals,
            "escalations": self.escalations,
            "executions": self.executions,
            "applied_steps": self.applied_steps,
            "suppressed_signatures": sorted(self.suppressed_signatures),
            "frozen_services": sorted(self.frozen_services),
            "occurrences": self.occurrences,
            "last_cycle_record": self.last_cycle_record,
        }

    def digest(self) -> str:
        h = hashlib.new(self.digest_algo)
        h.update(_canonical(self.state()).encode("utf-8"))
        return h.hexdigest()


def signature_key(signature: dict) -> str:
    return f"{signature['kind']}:{signature['target']}"


def iter_journal(path: str | Path) -> Iterator[JournalEntry]:
    """Yield entries in file order, failing loudly on the first bad record."""
    last_valid = -1
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip() == "":
                continue
            try:
                rec = json.loads(line)
                entry = JournalEntry.from_record(rec)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise JournalCorruptError(
                    f"malformed journal record at line {lineno} "
                    f"(last valid seq {last_valid}): {exc}",
                    last_valid_seq=last_valid,
                ) from exc
            if entry.seq != last_valid + 1:
                raise JournalCorruptError(
                    f"seq gap at line {lineno}: expected {last_valid + 1}, got {entry.seq}",
                    last_valid_seq=last_valid,
                )
            last_valid = entry.seq
            yield entry


def replay(path: str | Path, digest_algo: str = "sha256") -> KnowledgeBase:
    """Rebuild KB state from a journal file; never writes."""
    kb = KnowledgeBase(path, digest_algo=digest_algo)
    for entry in iter_journal(path):
        kb.next_seq = entry.seq + 1
        kb.apply(entry)
    return kb


def audit(entries: list[JournalEntry]) -> list[str]:
    """Scan a journal for accountability violations. Empty list = clean.

    Checks: every plan references previously journaled anomalies; every
    HR step_applied follows an approved decision for its plan; every
    step_failed is answered by a rollback or a rollback_failed escalation;
    no step is applied twice for one plan.
    """
    problems: list[str] = []
    seen_anomalies: set[str] = set()
    approved_plans: set[str] = set()
    plan_of_request: dict[str, str] = {}
    applied: set[tuple[str, str]] = set()
    failures: dict[int, dict] = {}
    answered: set[int] = set()

    for e in entries:
        p = e.payload
        if e.kind == "anomaly":
            seen_anomalies.add(p["id"])
        elif e.kind == "plan":
            for ref in p.get("anomaly_refs", []):
                if ref not in seen_anomalies:
                    problems.append(f"seq {e.seq}: plan {p['plan_id']} references unknown anomaly {ref}")
        elif e.kind == "approval_request":
            plan_of_request[p["request_id"]] = p["plan_id"]
        elif e.kind == "approval_decision":
            if p["decision"] == "approved":
                approved_plans.add(plan_of_request.get(p["request_id"], ""))
        elif e.kind == "step_applied":
            key = (p["plan_id"], p["step_id"])
            if key in applied:
                problems.append(f"seq {e.seq}: step {p['step_id']} applied twice for plan {p['plan_id']}")
            applied.add(key)
            if p.get("risk_class") == "HR" and p["plan_id"] not in approved_plans:
                problems.append(
                    f"seq {e.seq}: HR step {p['step_id']} applied without approved decision "
                    f"for plan {p['plan_id']}"
                )
        elif e.kind == "step_failed":
            failures[e.seq] = p
        elif e.kind == "rollback":
            for seq in list(failures):
                if failures[seq]["plan_id"] == p["plan_id"]:
                    answered.add(seq)
        elif e.kind == "escalation" and p.get("reason") == "rollback_failed":
            for seq in list(failures):
                if failures[seq]["plan_id"] == p.get("plan_id"):
                    answered.add(seq)

    for seq, p in failures.items():
        if seq not in answered:
            problems.append(f"seq {seq}: step_failed for plan {p['plan_id']} has no rollback entry")
    return problems
