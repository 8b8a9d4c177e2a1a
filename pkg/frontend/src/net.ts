/** Gateway client: REST commands + auto-reconnecting WS state stream. */
import { parseStateFrame, validateCommand } from "./schema.js";
import { backoffDelay } from "./throttle.js";
import type { Command, CommandResult, EpisodeSummary, StateFrame } from "./types.js";

export class GatewayClient {
  constructor(readonly baseUrl: string = "") {}

  /** Validates locally, then POSTs. Resolves with the gateway's result even
   * for 400s (result.ok is false); rejects only on schema/network errors. */
  async command(cmd: Command): Promise<CommandResult> {
    validateCommand(cmd);
    const res = await fetch(`${this.baseUrl}/api/command`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(cmd),
    });
    return (await res.json()) as CommandResult;
  }

  async state(cam = "side"): Promise<StateFrame> {
    const res = await fetch(`${this.baseUrl}/api/state?cam=${cam}`);
    if (!res.ok) throw new Error(`state fetch failed: ${res.status}`);
    return parseStateFrame(await res.json());
  }

  async episodes(): Promise<EpisodeSummary[]> {
    const res = await fetch(`${this.baseUrl}/api/episodes`);
    if (!res.ok) throw new Error(`episodes fetch failed: ${res.status}`);
    return (await res.json()) as EpisodeSummary[];
  }
}

export type StreamStatus = "connecting" | "open" | "retrying";

export interface StreamEvents {
  onFrame: (frame: StateFrame) => void;
  onStatus: (status: StreamStatus, detail?: string) => void;
}

/** WS /ws/stream consumer with exponential-backoff auto-retry. */
export class StateStream {
  private ws: WebSocket | null = null;
  private attempt = 0;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly events: StreamEvents,
    private readonly makeSocket: (url: string) => WebSocket = (u) =>
      new WebSocket(u),
  ) {}

  start(): void {
    this.closed = false;
    this.connect();
  }

  private connect(): void {
    if (this.closed) return;
    this.events.onStatus(this.attempt === 0 ? "connecting" : "retrying",
      this.attempt === 0 ? undefined : `attempt ${this.attempt + 1}`);
    const ws = (this.ws = this.makeSocket(this.url));
    ws.onopen = () => {
      this.attempt = 0;
      this.events.onStatus("open");
    };
    ws.onmessage = (ev: MessageEvent) => {
      try {
        this.events.onFrame(parseStateFrame(JSON.parse(String(ev.data))));
      } catch {
        // malformed frame: ignore, the next one will arrive shortly
      }
    };
    ws.onclose = () => this.scheduleRetry();
    ws.onerror = () => {
      // onclose fires after onerror; retry is scheduled there
    };
  }

  private scheduleRetry(): void {
    if (this.closed) return;
    const delay = backoffDelay(this.attempt);
    this.attempt += 1;
    this.events.onStatus("retrying", `reconnecting in ${delay} ms`);
    this.timer = setTimeout(() => this.connect(), delay);
  }

  stop(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.ws?.close();
  }
}
