// Poll loop with per-endpoint coalescing: at most one request in flight per
// poller, and a tick that arrives while one is running is dropped rather
// than queued. Failures keep the last good value and flip `stale`.

export class Poller<T> {
  private inFlight = false;
  public value: T | null = null;
  public stale = false;
  public lastSuccessAt: number | null = null; // controller tick of last success

  constructor(
    private readonly fetcher: () => Promise<T>,
    private readonly onUpdate: (value: T) => void,
    private readonly tickOf: (value: T) => number | null = () => null,
  ) {}

  async tick(): Promise<void> {
    if (this.inFlight) {
      return; // coalesce: a poll is already running
    }
    this.inFlight = true;
    try {
      const value = await this.fetcher();
      this.value = value;
      this.stale = false;
      const tick = this.tickOf(value);
      if (tick !== null) {
        this.lastSuccessAt = tick;
      }
      this.onUpdate(value);
    } catch {
      this.stale = true;
    } finally {
      this.inFlight = false;
    }
  }
}
