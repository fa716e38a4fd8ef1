/** Websocket session: connect with reconnect backoff, classify inbound
 * traffic, and surface frames/stats/status through callbacks. The
 * WebSocket implementation is injectable so the same code runs in the
 * browser and under node tests. */

import { FrameHeader, ServerMessage, framePayload,
         parseFrameHeader } from "./protocol.js";
import { ClientState } from "./state.js";

type WsLike = {
  binaryType: string;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  send(data: string): void;
  close(): void;
};

export interface ConnectionHooks {
  onFrame?(header: FrameHeader, payload: Uint8Array): void;
  onMessage?(msg: ServerMessage): void;
  onStatus?(status: string, detail?: string): void;
}

const BACKOFF_MS = [500, 1000, 2000, 4000, 8000];

export class Connection {
  state = new ClientState();
  private ws: WsLike | null = null;
  private attempts = 0;
  private closed = false;
  retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private hooks: ConnectionHooks,
    private wsFactory: (url: string) => WsLike =
      (u) => new (globalThis as any).WebSocket(u),
  ) {}

  connect() {
    this.closed = false;
    this.hooks.onStatus?.("connecting");
    let ws: WsLike;
    try {
      ws = this.wsFactory(this.url);
    } catch (e) {
      this.scheduleRetry(String(e));
      return;
    }
    ws.binaryType = "arraybuffer";
    ws.onopen = () => {
      this.attempts = 0;
      this.state.connected = true;
      this.hooks.onStatus?.("connected");
    };
    ws.onclose = () => {
      this.state.connected = false;
      if (!this.closed) this.scheduleRetry("connection dropped");
    };
    ws.onerror = () => {
      // onclose follows; the banner comes from there
    };
    ws.onmessage = (ev) => this.handle(ev.data);
    this.ws = ws;
  }

  close() {
    this.closed = true;
    if (this.retryTimer) clearTimeout(this.retryTimer);
    this.ws?.close();
  }

  private scheduleRetry(reason: string) {
    const delay = BACKOFF_MS[Math.min(this.attempts, BACKOFF_MS.length - 1)];
    this.attempts += 1;
    this.hooks.onStatus?.("disconnected", `${reason}; retrying in ${delay} ms`);
    this.retryTimer = setTimeout(() => this.connect(), delay);
  }

  private handle(data: unknown) {
    if (typeof data === "string") {
      let msg: ServerMessage;
      try {
        msg = JSON.parse(data);
      } catch {
        this.hooks.onStatus?.("protocol-error", "unparseable text message");
        return;
      }
      switch (msg.type) {
        case "ack":
          this.state.onAck(msg.seq);
          break;
        case "err":
          this.state.onErr(msg.seq);
          this.hooks.onStatus?.("server-error", msg.reason);
          break;
        case "state":
          this.state.onState(msg);
          break;
        case "stats":
          this.state.onStats(msg);
          break;
        case "probe_result":
          this.state.lastProbeDepth = msg.depth;
          this.state.probeSentinel = msg.sentinel;
          break;
      }
      this.hooks.onMessage?.(msg);
      return;
    }
    // binary: a frame packet; a malformed header resets the connection
    try {
      const buf = data as ArrayBuffer;
      const header = parseFrameHeader(buf);
      this.hooks.onFrame?.(header, framePayload(buf));
      this.sendRaw({ type: "frame_ack", frame_id: header.frameId,
                     seq: this.state.nextSeq() });
    } catch (e) {
      this.hooks.onStatus?.("protocol-error", String(e));
      this.ws?.close();
    }
  }

  /** Stage + send; returns false when validation rejected the message. */
  send(msg: Record<string, unknown>, delta?: Record<string, unknown>): boolean {
    const staged = this.state.stage(msg, delta as never);
    if (staged === null) return false;
    this.sendRaw(staged);
    return true;
  }

  private sendRaw(msg: Record<string, unknown>) {
    if (this.ws && this.state.connected) {
      this.ws.send(JSON.stringify(msg));
    }
  }
}
