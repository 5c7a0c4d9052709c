import { describe, expect, it, vi } from 'vitest';

import { Poller } from '../../src/poll.js';

function deferred<T>() {
  let resolve!: (value: T) => void;
  let reject!: (reason?: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

describe('Poller', () => {
  it('coalesces overlapping ticks into one in-flight request', async () => {
    const gate = deferred<number>();
    const fetcher = vi.fn(() => gate.promise);
    const poller = new Poller(fetcher, () => {});

    const first = poller.tick();
    const second = poller.tick(); // dropped: one already running
    await second;
    expect(fetcher).toHaveBeenCalledTimes(1);

    gate.resolve(7);
    await first;
    expect(poller.value).toBe(7);

    await poller.tick(); // next tick fetches again
    expect(fetcher).toHaveBeenCalledTimes(2);
  });

  it('keeps the last good value and flips stale on failure', async () => {
    let fail = false;
    const poller = new Poller<number>(
      async () => {
        if (fail) throw new Error('down');
        return 42;
      },
      () => {},
      (value) => value,
    );
    await poller.tick();
    expect(poller.stale).toBe(false);
    expect(poller.lastSuccessAt).toBe(42);

    fail = true;
    await poller.tick();
    expect(poller.stale).toBe(true);
    expect(poller.value).toBe(42); // stale but retained
    expect(poller.lastSuccessAt).toBe(42);

    fail = false;
    await poller.tick();
    expect(poller.stale).toBe(false);
  });

  it('notifies the subscriber on every successful poll', async () => {
    let calls = 0;
    const poller = new Poller(async () => ++calls, () => {});
    await poller.tick();
    await poller.tick();
    expect(poller.value).toBe(2);
  });
});
