// Typed client for the gateway. The console performs no state mutation
// except posting approval decisions and escalation acknowledgments.

import type {
  Anomaly,
  ApprovalRequest,
  Escalation,
  GatewayConfig,
  JournalEntry,
  StateResponse,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parse<T>(response: Response): Promise<T> {
  const body = await response.json();
  if (!response.ok) {
    throw new ApiError(response.status, body.error ?? 'unknown', body.message ?? 'request failed');
  }
  if (body.schema_version !== 1) {
    throw new ApiError(500, 'schema_mismatch', `unsupported schema_version ${body.schema_version}`);
  }
  return body as T;
}

export class GatewayClient {
  constructor(private readonly baseUrl: string) {}

  private url(path: string, params?: Record<string, string | number>): string {
    const url = new URL(path, this.baseUrl);
    for (const [key, value] of Object.entries(params ?? {})) {
      url.searchParams.set(key, String(value));
    }
    return url.toString();
  }

  async state(): Promise<StateResponse> {
    return parse(await fetch(this.url('/api/state')));
  }

  async anomalies(cycleFrom = 0): Promise<Anomaly[]> {
    const body = await parse<{ anomalies: Anomaly[] }>(
      await fetch(this.url('/api/anomalies', { cycle_from: cycleFrom })),
    );
    return body.anomalies;
  }

  async approvals(status?: string): Promise<ApprovalRequest[]> {
    const body = await parse<{ approvals: ApprovalRequest[] }>(
      await fetch(this.url('/api/approvals', status ? { status } : undefined)),
    );
    return body.approvals;
  }

  async decide(requestId: string, decision: 'approved' | 'rejected', decider: string): Promise<void> {
    await parse(
      await fetch(this.url(`/api/approvals/${requestId}`), {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ decision, decider }),
      }),
    );
  }

  async escalations(): Promise<Escalation[]> {
    const body = await parse<{ escalations: Escalation[] }>(
      await fetch(this.url('/api/escalations')),
    );
    return body.escalations;
  }

  async acknowledge(escalationId: string, decider: string): Promise<void> {
    await parse(
      await fetch(this.url(`/api/escalations/${escalationId}`), {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ decider }),
      }),
    );
  }

  async journal(fromSeq = 0, limit = 100): Promise<JournalEntry[]> {
    const body = await parse<{ entries: JournalEntry[] }>(
      await fetch(this.url('/api/journal', { from_seq: fromSeq, limit })),
    );
    return body.entries;
  }

  async config(): Promise<GatewayConfig> {
    const body = await parse<{ config: GatewayConfig }>(await fetch(this.url('/api/config')));
    return body.config;
  }
}
