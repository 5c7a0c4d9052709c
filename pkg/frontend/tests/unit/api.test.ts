import { afterEach, describe, expect, it, vi } from 'vitest';

import { ApiError, GatewayClient } from '../../src/api.js';

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

afterEach(() => {
  vi.restoreAllMocks();
});

describe('GatewayClient', () => {
  it('unwraps payloads and checks schema_version', async () => {
    vi.stubGlobal('fetch', vi.fn(async () =>
      jsonResponse({ schema_version: 1, anomalies: [] })));
    const client = new GatewayClient('http://gw.test');
    expect(await client.anomalies(5)).toEqual([]);
    const url = (fetch as ReturnType<typeof vi.fn>).mock.calls[0][0] as string;
    expect(url).toBe('http://gw.test/api/anomalies?cycle_from=5');
  });

  it('rejects responses with a foreign schema_version', async () => {
    vi.stubGlobal('fetch', vi.fn(async () =>
      jsonResponse({ schema_version: 99, anomalies: [] })));
    const client = new GatewayClient('http://gw.test');
    await expect(client.anomalies()).rejects.toMatchObject({ code: 'schema_mismatch' });
  });

  it('maps error bodies to ApiError with code and message', async () => {
    vi.stubGlobal('fetch', vi.fn(async () =>
      jsonResponse({ schema_version: 1, error: 'already_decided',
                     message: 'request is approved' }, 409)));
    const client = new GatewayClient('http://gw.test');
    try {
      await client.decide('req-1', 'approved', 'human:kim');
      expect.unreachable();
    } catch (error) {
      expect(error).toBeInstanceOf(ApiError);
      expect((error as ApiError).status).toBe(409);
      expect((error as ApiError).code).toBe('already_decided');
    }
  });

  it('posts decisions with decider attached', async () => {
    const mock = vi.fn(async () => jsonResponse({ schema_version: 1, queued: 'approved' }));
    vi.stubGlobal('fetch', mock);
    const client = new GatewayClient('http://gw.test');
    await client.decide('req-9', 'approved', 'human:sam');
    const [url, init] = mock.mock.calls[0] as [string, RequestInit];
    expect(url).toBe('http://gw.test/api/approvals/req-9');
    expect(JSON.parse(init.body as string)).toEqual({
      decision: 'approved',
      decider: 'human:sam',
    });
  });
});
