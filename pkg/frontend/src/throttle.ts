/** Rate limiter for the command stream: at most `hz` sends per second,
 * always keeping only the latest pending value (stale jogs are dropped,
 * never queued). Injectable clock for tests. */

export class CommandThrottle<T> {
  private readonly period: number;
  private lastSent = -Infinity;
  private pending: T | null = null;

  constructor(
    hz: number,
    private readonly send: (value: T) => void,
    private readonly now: () => number = () => performance.now(),
  ) {
    if (!(hz > 0)) throw new Error(`rate ${hz} must be positive`);
    this.period = 1000 / hz;
  }

  /** Offer a value; it is sent immediately if the rate allows, otherwise it
   * replaces any pending value. Returns true if sent now. */
  offer(value: T): boolean {
    const t = this.now();
    if (t - this.lastSent >= this.period) {
      this.lastSent = t;
      this.pending = null;
      this.send(value);
      return true;
    }
    this.pending = value;
    return false;
  }

  /** Called on a timer: flushes the latest pending value once the period
   * has elapsed. Returns true if something was sent. */
  tick(): boolean {
    if (this.pending === null) return false;
    const t = this.now();
    if (t - this.lastSent < this.period) return false;
    const value = this.pending;
    this.pending = null;
    this.lastSent = t;
    this.send(value);
    return true;
  }

  get hasPending(): boolean {
    return this.pending !== null;
  }
}

/** Exponential backoff schedule for reconnect attempts (ms). */
export function backoffDelay(
  attempt: number,
  base = 250,
  cap = 5000,
): number {
  if (attempt < 0) throw new Error("attempt must be >= 0");
  return Math.min(cap, base * 2 ** attempt);
}
