/**
 * Reconnecting socket over an injectable WebSocket factory.
 *
 * The browser passes the native WebSocket; tests pass a fake or the `ws`
 * package. Reconnects use exponential backoff (1 s doubling to 30 s),
 * resetting once a connection opens.
 */

export type ConnectionState = "connected" | "disconnected" | "reconnecting";

export interface SocketLike {
  binaryType: string;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  send(data: string | ArrayBuffer): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;
export type Scheduler = (fn: () => void, delayMs: number) => unknown;

export interface MirrorSocketOptions {
  url: string;
  factory: SocketFactory;
  onMessage: (data: string) => void;
  onStateChange?: (state: ConnectionState) => void;
  baseBackoffMs?: number;
  maxBackoffMs?: number;
  schedule?: Scheduler;
}

export class MirrorSocket {
  private ws: SocketLike | null = null;
  private attempts = 0;
  private closed = false;
  readonly backoffs: number[] = [];

  constructor(private readonly opts: MirrorSocketOptions) {}

  connect(): void {
    this.closed = false;
    this.open();
  }

  private open(): void {
    const ws = this.opts.factory(this.opts.url);
    this.ws = ws;
    ws.binaryType = "arraybuffer";
    ws.onopen = () => {
      this.attempts = 0;
      this.notify("connected");
    };
    ws.onmessage = (event) => {
      if (typeof event.data === "string") {
        this.opts.onMessage(event.data);
      } else if (event.data != null) {
        this.opts.onMessage(String(event.data));
      }
    };
    ws.onerror = () => {
      // the close handler owns reconnection
    };
    ws.onclose = () => {
      this.ws = null;
      if (this.closed) {
        this.notify("disconnected");
        return;
      }
      this.notify("reconnecting");
      const base = this.opts.baseBackoffMs ?? 1000;
      const max = this.opts.maxBackoffMs ?? 30000;
      const delay = Math.min(base * 2 ** this.attempts, max);
      this.attempts += 1;
      this.backoffs.push(delay);
      const schedule = this.opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
      schedule(() => {
        if (!this.closed) {
          this.open();
        }
      }, delay);
    };
  }

  get connected(): boolean {
    return this.ws !== null;
  }

  /** Silently drops while disconnected; frames are disposable. */
  send(data: string | ArrayBuffer): void {
    try {
      this.ws?.send(data);
    } catch {
      // a race with close; the reconnect path recovers
    }
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
    this.ws = null;
  }

  private notify(state: ConnectionState): void {
    this.opts.onStateChange?.(state);
  }
}
