"""The managed system: a deterministic discrete-time microservice mesh.

Services carry baseline metrics, tunables and an acyclic dependency graph.
Each tick applies active faults, propagates degradation from callees to
callers (half the latency excess is inherited; a downed callee floors the
caller's error rate), doubles latency while memory is saturated, and
optionally adds seeded noise. With noise amplitude 0 and a fixed scenario
two runs produce byte-identical sensor streams.

Actuators mutate state through a single table and report exactly which
fields they touched with their prior values, which is what makes rollback a
mechanical restore. Scenario files can arm forced-failure hooks (an actuate
or its inverse fails on purpose) and retrigger hooks (an actuation re-injects
a fault) - the instruments behind the rollback and degradation-loop drills.
"""

from __future__ import annotations

import copy
import graphlib
import random
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ScenarioError, UnknownTargetError
from .telemetry import CollaborationEvent, MetricSample

BASELINE_METRICS = ("latency_ms", "error_rate", "cpu_pct", "mem_mb", "cert_days_remaining")
FAULT_KINDS = ("memory_leak", "latency_spike", "crash", "cert_decay")


@dataclass
class ServiceSpec:
    service_id: str
    depends_on: list[str]
    baseline: dict[str, float]
    tunables: dict[str, float] = field(default_factory=dict)


@dataclass
class FaultSpec:
    fault_kind: str
    target: str
    start_tick: int
    duration: int | None = None
    rate_mb_per_tick: float = 0.0
    factor: float = 0.0
    days_per_tick: float = 0.0

    def to_payload(self) -> dict:
        out = {"fault_kind": self.fault_kind, "target": self.target, "start_tick": self.start_tick}
        if self.duration is not None:
            out["duration"] = self.duration
        if self.fault_kind == "memory_leak":
            out["rate_mb_per_tick"] = self.rate_mb_per_tick
        elif self.fault_kind == "latency_spike":
            out["factor"] = self.factor
        elif self.fault_kind == "cert_decay":
            out["days_per_tick"] = self.days_per_tick
        return out


@dataclass
class ServiceState:
    spec: ServiceSpec
    up: bool = True
    mem_mb: float = 0.0
    mem_limit_mb: float = 0.0
    cert_days: float = 0.0
    cpu_offset: float = 0.0
    latency_factor: float = 1.0
    latency_baseline: float = 0.0
    tunables: dict[str, float] = field(default_factory=dict)
    active_faults: list[FaultSpec] = field(default_factory=list)
    downtime_remaining: int = 0

    def snapshot_fields(self) -> dict:
        return {
            "up": self.up,
            "mem_mb": self.mem_mb,
            "mem_limit_mb": self.mem_limit_mb,
            "cert_days": self.cert_days,
            "cpu_offset": self.cpu_offset,
            "latency_factor": self.latency_factor,
            "latency_baseline": self.latency_baseline,
            "tunables": dict(self.tunables),
            "active_faults": [f.to_payload() for f in self.active_faults],
            "downtime_remaining": self.downtime_remaining,
        }


def _parse_fault(raw: dict, where: str) -> FaultSpec:
    kind = raw.get("kind") or raw.get("fault_kind")
    if kind not in FAULT_KINDS:
        raise ScenarioError(f"{where}: unknown fault kind {kind!r}")
    fault = FaultSpec(
        fault_kind=kind,
        target=raw["target"],
        start_tick=int(raw.get("start_tick", 0)),
        duration=raw.get("duration"),
        rate_mb_per_tick=float(raw.get("rate_mb_per_tick", 0.0)),
        factor=float(raw.get("factor", 0.0)),
        days_per_tick=float(raw.get("days_per_tick", 0.0)),
    )
    if kind == "memory_leak" and fault.rate_mb_per_tick <= 0:
        raise ScenarioError(f"{where}: memory_leak needs rate_mb_per_tick > 0")
    if kind == "latency_spike" and fault.factor <= 0:
        raise ScenarioError(f"{where}: latency_spike needs factor > 0")
    if kind == "cert_decay" and fault.days_per_tick <= 0:
        raise ScenarioError(f"{where}: cert_decay needs days_per_tick > 0")
    return fault


def load_scenario(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ScenarioError(f"scenario file not found: {p}")
    try:
        doc = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario file {p} is not valid YAML: {exc}") from exc
    if "services" not in doc or not doc["services"]:
        raise ScenarioError(f"scenario {p} defines no services")
    return doc


class SimEnv:
    """Single-owner simulator state; tick/sense/actuate serialized by the loop."""

    def __init__(self, scenario: dict, seed: int = 0, noise_amplitude: float = 0.0,
                 propagation_coeff: float = 0.5, down_error_floor: float = 0.9,
                 upgrade_downtime: int = 3):
        self.tick_index = 0
        self.noise_amplitude = noise_amplitude
        self.propagation = propagation_coeff
        self.down_floor = down_error_floor
        self.upgrade_downtime = upgrade_downtime
        self.rng = random.Random(seed)
        self.services: dict[str, ServiceState] = {}
        self.pending_faults: list[FaultSpec] = []
        self.collab_schedule: dict[int, list[CollaborationEvent]] = {}
        self.failure_hooks: list[dict] = []
        self.retrigger_hooks: list[dict] = []
        self._order: list[str] = []
        self._load(scenario)

    # -- loading -----------------------------------------------------------

    def _load(self, scenario: dict) -> None:
        for raw in scenario["services"]:
            spec = ServiceSpec(
                service_id=raw["service_id"],
                depends_on=list(raw.get("depends_on", [])),
                baseline=dict(raw["baseline"]),
                tunables=dict(raw.get("tunables", {})),
            )
            for metric in BASELINE_METRICS:
                if metric not in spec.baseline:
                    raise ScenarioError(f"service {spec.service_id}: baseline.{metric} missing")
            if "mem_limit_mb" not in spec.baseline:
                raise ScenarioError(f"service {spec.service_id}: baseline.mem_limit_mb missing")
            if spec.baseline["mem_mb"] > spec.baseline["mem_limit_mb"]:
                raise ScenarioError(f"service {spec.service_id}: mem_mb exceeds mem_limit_mb")
            if not 0 <= spec.baseline["error_rate"] <= 1:
                raise ScenarioError(f"service {spec.service_id}: error_rate outside [0,1]")
            if spec.service_id in self.services:
                raise ScenarioError(f"duplicate service id {spec.service_id}")
            self.services[spec.service_id] = ServiceState(
                spec=spec,
                mem_mb=spec.baseline["mem_mb"],
                mem_limit_mb=spec.baseline["mem_limit_mb"],
                cert_days=spec.baseline["cert_days_remaining"],
                latency_baseline=spec.baseline["latency_ms"],
                tunables=dict(spec.tunables),
            )

        graph = {}
        for sid in sorted(self.services):
            deps = self.services[sid].spec.depends_on
            for dep in deps:
                if dep not in self.services:
                    raise ScenarioError(f"service {sid} depends on unknown service {dep}")
            graph[sid] = sorted(deps)
        try:
            # callees first, so degradation cascades transitively in one pass
            self._order = list(graphlib.TopologicalSorter(graph).static_order())
        except graphlib.CycleError as exc:
            raise ScenarioError(f"dependency graph has a cycle: {exc.args[1]}") from exc

        for i, raw in enumerate(scenario.get("faults", [])):
            fault = _parse_fault(raw, f"faults[{i}]")
            if fault.target not in self.services:
                raise ScenarioError(f"faults[{i}]: unknown target {fault.target}")
            self.pending_faults.append(fault)

        for raw in scenario.get("collaboration", []):
            event = CollaborationEvent(
                contributor_id=raw["contributor_id"],
                service_id=raw["service_id"],
                tick=int(raw["tick"]),
            )
            self.collab_schedule.setdefault(event.tick, []).append(event)

        self.failure_hooks = [dict(h) for h in scenario.get("failure_hooks", [])]
        self.retrigger_hooks = [dict(h) for h in scenario.get("retrigger_hooks", [])]

    # -- time --------------------------------------------------------------

    def _activate(self, fault: FaultSpec) -> None:
        state = self.services[fault.target]
        if fault.fault_kind == "crash":
            # a crash is instantaneous: the service stays down until restarted
            state.up = False
            return
        if fault.fault_kind == "latency_spike":
            # one multiplicative jump, held until remediation or expiry
            state.latency_factor = fault.factor
        state.active_faults.append(fault)

    def tick(self) -> int:
        """Advance one tick: fault activation and effects, downtime, clocks."""
        self.tick_index += 1
        t = self.tick_index

        still_pending = []
        for fault in self.pending_faults:
            if fault.start_tick <= t:
                self._activate(fault)
            else:
                still_pending.append(fault)
        self.pending_faults = still_pending

        for sid in self._order:
            state = self.services[sid]
            if state.downtime_remaining > 0:
                state.downtime_remaining -= 1
                if state.downtime_remaining == 0:
                    state.up = True
            remaining = []
            for fault in state.active_faults:
                if fault.duration is not None and t >= fault.start_tick + fault.duration:
                    if fault.fault_kind == "latency_spike":
                        state.latency_factor = 1.0
                    continue
                if fault.fault_kind == "memory_leak":
                    state.mem_mb = min(state.mem_limit_mb, state.mem_mb + fault.rate_mb_per_tick)
                elif fault.fault_kind == "cert_decay":
                    state.cert_days = max(0.0, state.cert_days - fault.days_per_tick)
                remaining.append(fault)
            state.active_faults = remaining
        return t

    def observed(self) -> dict[str, dict[str, float]]:
        """Effective per-service metrics at the current tick, post-propagation."""
        metrics: dict[str, dict[str, float]] = {}
        for sid in self._order:
            state = self.services[sid]
            base = state.spec.baseline
            latency = state.latency_baseline * state.latency_factor
            if state.mem_mb >= state.mem_limit_mb:
                latency *= 2  # saturated memory degrades service
            row = {
                "latency_ms": latency,
                "error_rate": base["error_rate"],
                "cpu_pct": min(100.0, max(0.0, base["cpu_pct"] + state.cpu_offset)),
                "mem_mb": state.mem_mb,
                "cert_days_remaining": state.cert_days,
            }
            for dep in state.spec.depends_on:
                dep_state = self.services[dep]
                dep_row = metrics[dep]
                excess = dep_row["latency_ms"] - dep_state.spec.baseline["latency_ms"]
                row["latency_ms"] += self.propagation * max(0.0, excess)
                if not dep_state.up:
                    row["error_rate"] = max(row["error_rate"], self.down_floor)
            if not state.up:
                row["error_rate"] = 1.0
            row["error_rate"] = min(1.0, max(0.0, row["error_rate"]))
            row["latency_ms"] = max(0.0, row["latency_ms"])
            metrics[sid] = row
        return metrics

    def sense(self) -> list[MetricSample | CollaborationEvent]:
        """One sample per service per metric at the current tick, plus any
        scripted collaboration events."""
        t = self.tick_index
        samples: list[MetricSample | CollaborationEvent] = []
        metrics = self.observed()
        for sid in self._order:
            row = metrics[sid]
            for metric in BASELINE_METRICS:
                value = row[metric]
                if self.noise_amplitude > 0:
                    value += self.noise_amplitude * self.rng.uniform(-1.0, 1.0)
                    if metric == "error_rate":
                        value = min(1.0, max(0.0, value))
                    elif metric in ("latency_ms", "mem_mb"):
                        value = max(0.0, value)
                    elif metric == "cpu_pct":
                        value = min(100.0, max(0.0, value))
                samples.append(MetricSample(sid, metric, "dynamic", value, t))
        samples.extend(self.collab_schedule.get(t, []))
        return samples

    # -- fault injection -----------------------------------------------------

    def inject(self, fault: FaultSpec) -> None:
        if fault.target not in self.services:
            raise UnknownTargetError(f"inject: unknown service {fault.target}")
        if fault.start_tick < self.tick_index:
            raise ScenarioError(f"inject: start_tick {fault.start_tick} is in the past")
        if fault.start_tick == self.tick_index:
            self._activate(fault)
        else:
            self.pending_faults.append(fault)

    # -- actuators -----------------------------------------------------------

    def has_service(self, service_id: str) -> bool:
        return service_id in self.services

    def actuate(self, action_kind: str, target: str, params: dict,
                phase: str = "apply") -> tuple[bool, str, dict]:
        """Run one actuator command.

        Returns (ok, reason, touched) where touched maps each mutated state
        field to its value before the command - the rollback record.
        """
        if target not in self.services:
            raise UnknownTargetError(f"actuate: unknown service {target}")
        if self._hook_fires(action_kind, target, phase):
            return False, "injected", {}
        state = self.services[target]
        touched: dict = {}

        def touch(field_name: str):
            if field_name not in touched:
                value = getattr(state, field_name)
                if field_name == "active_faults":
                    touched[field_name] = [f.to_payload() for f in value]
                elif field_name == "tunables":
                    touched[field_name] = dict(value)
                else:
                    touched[field_name] = value

        if action_kind == "restart_service":
            touch("up")
            touch("mem_mb")
            touch("active_faults")
            touch("downtime_remaining")
            state.up = True
            state.downtime_remaining = 0
            state.mem_mb = state.spec.baseline["mem_mb"]
            state.active_faults = [f for f in state.active_faults if f.fault_kind != "memory_leak"]
        elif action_kind == "increase_memory":
            touch("mem_limit_mb")
            state.mem_limit_mb += params.get("delta", 512)
        elif action_kind == "tune_parameter":
            name = params.get("name", "timeout")
            touch("tunables")
            state.tunables[name] = params.get("value")
            if name == "timeout":
                touch("latency_factor")
                touch("active_faults")
                state.latency_factor = 1.0
                state.active_faults = [f for f in state.active_faults
                                       if f.fault_kind != "latency_spike"]
        elif action_kind == "clear_logs":
            touch("cpu_offset")
            state.cpu_offset = max(0.0, state.cpu_offset - 5.0)
        elif action_kind == "rotate_certificate":
            touch("cert_days")
            touch("active_faults")
            state.cert_days = 365.0
            state.active_faults = [f for f in state.active_faults if f.fault_kind != "cert_decay"]
        elif action_kind == "upgrade_service":
            touch("up")
            touch("active_faults")
            touch("downtime_remaining")
            touch("mem_mb")
            touch("latency_factor")
            state.active_faults = []
            state.up = False
            state.downtime_remaining = self.upgrade_downtime
            state.mem_mb = state.spec.baseline["mem_mb"]
            state.latency_factor = 1.0
        elif action_kind == "backup":
            pass  # marker action: no state effect
        elif action_kind == "scale_out":
            touch("latency_baseline")
            state.latency_baseline *= 0.8
        elif action_kind == "redistribute_keys":
            pass  # marker action in the simulator
        else:
            raise UnknownTargetError(f"actuate: no actuator for action kind {action_kind!r}")

        self._fire_retriggers(action_kind, target)
        return True, "ok", touched

    def restore_fields(self, target: str, fields: dict) -> None:
        """Inverse application: put touched fields back to their snapshot values."""
        state = self.services[target]
        for field_name, value in fields.items():
            if field_name == "active_faults":
                state.active_faults = [_parse_fault(raw, "restore") for raw in value]
            elif field_name == "tunables":
                state.tunables = dict(value)
            else:
                setattr(state, field_name, value)

    def apply_inverse(self, action_kind: str, target: str, fields: dict) -> tuple[bool, str]:
        """Rollback path for one applied step; honors phase=inverse failure hooks."""
        if target not in self.services:
            raise UnknownTargetError(f"apply_inverse: unknown service {target}")
        if self._hook_fires(action_kind, target, "inverse"):
            return False, "injected"
        self.restore_fields(target, fields)
        return True, "ok"

    def _hook_fires(self, action_kind: str, target: str, phase: str) -> bool:
        for hook in self.failure_hooks:
            if hook.get("action_kind") != action_kind or hook.get("target") != target:
                continue
            hook_phase = hook.get("phase", "apply")
            if hook_phase not in (phase, "both"):
                continue
            remaining = hook.get("count")
            if remaining is not None:
                if remaining <= 0:
                    continue
                hook["count"] = remaining - 1
            return True
        return False

    def _fire_retriggers(self, action_kind: str, target: str) -> None:
        for hook in self.retrigger_hooks:
            if hook.get("action_kind") != action_kind or hook.get("target") != target:
                continue
            raw = dict(hook["fault"])
            raw.setdefault("target", target)
            raw["start_tick"] = self.tick_index + int(raw.pop("delay", 1))
            self.pending_faults.append(_parse_fault(raw, "retrigger"))

    def snapshot(self, service_ids: list[str]) -> dict[str, dict]:
        return {sid: copy.deepcopy(self.services[sid].snapshot_fields())
                for sid in sorted(set(service_ids))}

    def state_payload(self) -> dict:
        """Gateway-facing view of every service at the current tick."""
        metrics = self.observed()
        out = {}
        for sid in self._order:
            state = self.services[sid]
            out[sid] = {
                "up": state.up,
                "metrics": metrics[sid],
                "mem_limit_mb": state.mem_limit_mb,
                "tunables": dict(state.tunables),
                "active_faults": [f.to_payload() for f in state.active_faults],
            }
        return out
