import type {
  Anomaly,
  ApprovalRequest,
  Escalation,
  JournalEntry,
  ServiceInfo,
  StateResponse,
} from '../src/types.js';

export function serviceInfo(overrides: Partial<ServiceInfo> = {}): ServiceInfo {
  return {
    up: true,
    metrics: {
      latency_ms: 100,
      error_rate: 0.01,
      cpu_pct: 20,
      mem_mb: 100,
      cert_days_remaining: 365,
    },
    mem_limit_mb: 200,
    tunables: { timeout: 30 },
    active_faults: [],
    ...overrides,
  };
}

export function stateResponse(services: Record<string, ServiceInfo>, tick = 40): StateResponse {
  return { schema_version: 1, tick, cycle: tick, read_only: false, services };
}

export function anomaly(overrides: Partial<Anomaly> = {}): Anomaly {
  return {
    seq: 41,
    cycle: 40,
    tick: 40,
    id: 'a-00040-01-cert_days_remaining',
    signature: { kind: 'cert_expiring', target: 'svc-b' },
    layer: 'dynamic',
    severity: 'low',
    metric: 'cert_days_remaining',
    votes: [
      { detector_id: 'threshold', anomalous: true, score: 0.5167 },
      { detector_id: 'cusum', anomalous: true, score: 6.04 },
    ],
    ...overrides,
  };
}

export function approvalRequest(overrides: Partial<ApprovalRequest> = {}): ApprovalRequest {
  return {
    request_id: 'req-00040-000',
    plan_id: 'p-00040-01-cert_days_remaining-0',
    signature: { kind: 'cert_expiring', target: 'svc-b' },
    assessment: {
      plan_id: 'p-00040-01-cert_days_remaining-0',
      A: 1.0,
      alpha: 1.0,
      gated: true,
      per_step: [
        { step_id: 's0', risk_class: 'MR', risk_subtype: null },
        { step_id: 's1', risk_class: 'HR', risk_subtype: 'cert_mgmt' },
      ],
    },
    status: 'pending',
    requested_tick: 40,
    decided_tick: null,
    decider: null,
    plan: {
      plan_id: 'p-00040-01-cert_days_remaining-0',
      anomaly_refs: ['a-00040-01-cert_days_remaining'],
      signature: { kind: 'cert_expiring', target: 'svc-b' },
      steps: [
        {
          step_id: 's0', action_kind: 'backup', target: 'svc-b', params: {},
          risk_class: 'MR', risk_subtype: null, weight: 1.0,
        },
        {
          step_id: 's1', action_kind: 'rotate_certificate', target: 'svc-b', params: {},
          risk_class: 'HR', risk_subtype: 'cert_mgmt', weight: 1.0,
        },
      ],
      impact_estimate: 1.0,
      rank_score: 0.5,
      selected: true,
    },
    ...overrides,
  };
}

export function escalation(overrides: Partial<Escalation> = {}): Escalation {
  return {
    escalation_id: 'esc-00020-000',
    reason: 'loop_guard',
    service_id: 'svc-c',
    signature: { kind: 'range_violation', target: 'svc-c' },
    anomaly_id: 'a-00020-01-mem_mb',
    acked: false,
    ...overrides,
  };
}

export function journalEntry(overrides: Partial<JournalEntry> = {}): JournalEntry {
  return {
    seq: 0,
    cycle: 20,
    tick: 20,
    kind: 'feedback',
    payload: { event: 'cycle_record' },
    outcome: 'n/a',
    ...overrides,
  };
}
