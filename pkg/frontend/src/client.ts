/**
 * Cockpit session: one WebSocket to the stream server, decoded frame state,
 * pick round trips, and reconnect with exponential backoff. The UI never
 * mutates simulation truth; every effect leaves through an action message.
 */

import {
  decodeMessage, encodePixelPick, EVENT_INFO, Incomplete, UnknownMessage, VERSION,
  type EventMsg, type FrameMsg, type Message, type NoiseMsg, type Vec3,
} from "./protocol.js";

export interface ServerHello {
  protocol_version: number;
  width: number;
  height: number;
  fps: number;
  frame: number;
  camera?: {
    fx: number; fy: number; cx: number; cy: number;
    rotation: number[]; translation: number[];
  };
}

export interface WebSocketLike {
  binaryType: string;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: ArrayBuffer | string }) => void) | null;
  send(data: ArrayBuffer): void;
  close(): void;
}

export type SocketFactory = (url: string) => WebSocketLike;

export interface ClientEvents {
  onHello?: (hello: ServerHello) => void;
  onPreview?: (frame: FrameMsg) => void;
  onGenerated?: (frame: FrameMsg) => void;
  onFlow?: (frame: FrameMsg) => void;
  onDepth?: (frame: FrameMsg) => void;
  onNoise?: (noise: NoiseMsg) => void;
  onEvent?: (event: EventMsg) => void;
  onStatus?: (status: string) => void;
  onVersionMismatch?: (serverVersion: number) => void;
}

const BACKOFF_BASE_MS = 250;
const BACKOFF_MAX_MS = 8000;

export class CockpitClient {
  hello: ServerHello | null = null;
  connected = false;
  framesSeen = 0;
  private ws: WebSocketLike | null = null;
  private closed = false;
  private attempts = 0;
  private pickWaiter: ((p: Vec3 | null) => void) | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(private url: string, private events: ClientEvents,
              private factory: SocketFactory,
              private scheduler: (fn: () => void, ms: number) => ReturnType<typeof setTimeout>
                = (fn, ms) => setTimeout(fn, ms)) {}

  connect(): void {
    this.closed = false;
    this.open();
  }

  close(): void {
    this.closed = true;
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.ws?.close();
  }

  /** current reconnect delay, exposed for tests */
  backoffMs(): number {
    return Math.min(BACKOFF_MAX_MS, BACKOFF_BASE_MS * 2 ** Math.max(0, this.attempts - 1));
  }

  send(payload: ArrayBuffer): void {
    if (this.connected && this.ws) this.ws.send(payload);
  }

  /** PixelPick round trip; at most one in flight (later calls resolve null). */
  pick(u: number, v: number): Promise<Vec3 | null> {
    if (!this.connected || this.pickWaiter) return Promise.resolve(null);
    return new Promise((resolve) => {
      this.pickWaiter = resolve;
      this.send(encodePixelPick(u, v));
      this.scheduler(() => {
        if (this.pickWaiter === resolve) {
          this.pickWaiter = null;
          resolve(null);
        }
      }, 2000);
    });
  }

  private open(): void {
    this.events.onStatus?.(this.attempts ? `reconnecting (try ${this.attempts + 1})` : "connecting");
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.binaryType = "arraybuffer";
    ws.onopen = () => {
      this.connected = true;
      this.attempts = 0;
      this.events.onStatus?.("connected");
    };
    ws.onmessage = (ev) => {
      if (typeof ev.data === "string") return;
      this.handleBuffer(ev.data);
    };
    ws.onerror = () => undefined;
    ws.onclose = () => {
      const was = this.connected;
      this.connected = false;
      if (this.pickWaiter) {
        this.pickWaiter(null);
        this.pickWaiter = null;
      }
      if (this.closed) return;
      this.attempts += 1;
      const delay = this.backoffMs();
      this.events.onStatus?.(was ? `disconnected; retrying in ${delay} ms` : `retrying in ${delay} ms`);
      this.reconnectTimer = this.scheduler(() => this.open(), delay);
    };
  }

  private handleBuffer(buf: ArrayBuffer): void {
    let offset = 0;
    const bytes = new Uint8Array(buf);
    while (offset < bytes.length) {
      let msg: Message;
      let used: number;
      try {
        [msg, used] = decodeMessage(bytes, offset);
      } catch (err) {
        if (err instanceof UnknownMessage) {
          offset += err.consumed;
          continue;
        }
        if (err instanceof Incomplete) return;
        this.events.onStatus?.(`protocol error: ${(err as Error).message}`);
        return;
      }
      offset += used;
      this.dispatch(msg);
    }
  }

  private dispatch(msg: Message): void {
    switch (msg.kind) {
      case "event":
        if (msg.code === EVENT_INFO && this.hello === null && msg.detail.startsWith("{")) {
          try {
            const hello = JSON.parse(msg.detail) as ServerHello;
            if (typeof hello.protocol_version === "number") {
              if (hello.protocol_version !== VERSION) {
                this.events.onVersionMismatch?.(hello.protocol_version);
                this.close();
                return;
              }
              this.hello = hello;
              this.events.onHello?.(hello);
              return;
            }
          } catch {
            /* not a hello payload; fall through to the event handler */
          }
        }
        this.events.onEvent?.(msg);
        return;
      case "preview":
        this.framesSeen += 1;
        this.events.onPreview?.(msg);
        return;
      case "generated":
        this.events.onGenerated?.(msg);
        return;
      case "flow":
        this.events.onFlow?.(msg);
        return;
      case "depth":
        this.events.onDepth?.(msg);
        return;
      case "noise":
        this.events.onNoise?.(msg);
        return;
      case "pick_result": {
        const finite = msg.point.every((x) => Number.isFinite(x));
        if (this.pickWaiter) {
          const resolve = this.pickWaiter;
          this.pickWaiter = null;
          resolve(finite ? msg.point : null);
        }
        return;
      }
      default:
        return;
    }
  }
}
