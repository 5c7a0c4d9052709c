// Wire types mirroring docs/gateway_api.md (schema_version 1).

export interface Signature {
  kind: string;
  target: string;
}

export interface ServiceMetrics {
  latency_ms: number;
  error_rate: number;
  cpu_pct: number;
  mem_mb: number;
  cert_days_remaining: number;
}

export interface ServiceInfo {
  up: boolean;
  metrics: ServiceMetrics;
  mem_limit_mb: number;
  tunables: Record<string, unknown>;
  active_faults: Array<Record<string, unknown>>;
}

export interface StateResponse {
  schema_version: number;
  tick: number;
  cycle: number;
  read_only: boolean;
  services: Record<string, ServiceInfo>;
}

export interface DetectorVote {
  detector_id: string;
  anomalous: boolean;
  score: number;
}

export interface Anomaly {
  seq: number;
  cycle: number;
  tick: number;
  id: string;
  signature: Signature;
  layer: string;
  severity: 'low' | 'medium' | 'high';
  metric: string | null;
  votes: DetectorVote[];
}

export interface ActionStep {
  step_id: string;
  action_kind: string;
  target: string;
  params: Record<string, unknown>;
  risk_class: 'LR' | 'MR' | 'HR';
  risk_subtype: string | null;
  weight: number;
}

export interface Plan {
  plan_id: string;
  anomaly_refs: string[];
  signature: Signature;
  steps: ActionStep[];
  impact_estimate: number;
  rank_score: number;
  selected: boolean;
}

export interface Assessment {
  plan_id: string;
  A: number;
  alpha: number;
  gated: boolean;
  per_step: Array<{ step_id: string; risk_class: string; risk_subtype: string | null }>;
}

export type ApprovalStatus = 'pending' | 'approved' | 'rejected' | 'expired';

export interface ApprovalRequest {
  request_id: string;
  plan_id: string;
  signature: Signature;
  assessment: Assessment;
  status: ApprovalStatus;
  requested_tick: number;
  decided_tick: number | null;
  decider: string | null;
  plan: Plan | null;
}

export interface Escalation {
  escalation_id: string;
  reason: string;
  service_id: string;
  signature: Signature;
  anomaly_id?: string;
  acked: boolean;
}

export interface JournalEntry {
  seq: number;
  cycle: number;
  tick: number;
  kind: string;
  payload: Record<string, unknown>;
  outcome: 'ok' | 'failed' | 'n/a';
}

export interface GatewayConfig {
  goals: Record<string, unknown>;
  gateway: { host: string; port: number; poll_interval_s: number };
  plan: { alpha: number; [key: string]: unknown };
  [key: string]: unknown;
}

export interface MetricBounds {
  min?: number;
  max?: number;
}
