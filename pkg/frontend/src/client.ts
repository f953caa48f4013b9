/** Service client: HTTP posts with debounce, stream with backoff.
 *
 * All I/O and timing primitives are injectable so the logic is testable
 * without a browser or a live service.
 */

import { clampTargets } from "./limits.js";
import { Box3 } from "./fk.js";
import {
  ConfigsDoc,
  GeometryDoc,
  SCHEMA_VERSION,
  SensorReadingDoc,
  SessionStateDoc,
  Targets,
  TeleopFrameDoc,
} from "./types.js";

export interface HttpResult {
  status: number;
  body: unknown;
}

export interface SocketHandle {
  send(text: string): void;
  close(): void;
}

export interface SocketHandlers {
  onOpen(): void;
  onMessage(text: string): void;
  onClose(): void;
}

export interface Io {
  http(path: string, method: string, body?: unknown): Promise<HttpResult>;
  openSocket(path: string, handlers: SocketHandlers): SocketHandle;
  now(): number;
  schedule(fn: () => void, ms: number): unknown;
  cancel(id: unknown): void;
}

export const MIN_SUBMIT_INTERVAL_MS = 40; // debounce floor, 25 Hz
export const BACKOFF_BASE_MS = 250;
export const BACKOFF_CAP_MS = 8000;
export const STALE_AFTER_MS = 1000;

export function backoffDelays(attempt: number): number {
  return Math.min(BACKOFF_CAP_MS, BACKOFF_BASE_MS * 2 ** attempt);
}

export function browserIo(baseUrl: string): Io {
  const wsBase = baseUrl.replace(/^http/, "ws");
  return {
    async http(path, method, body) {
      const resp = await fetch(baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
      return { status: resp.status, body: await resp.json() };
    },
    openSocket(path, handlers) {
      const ws = new WebSocket(wsBase + path);
      ws.onopen = () => handlers.onOpen();
      ws.onmessage = (ev) => handlers.onMessage(String(ev.data));
      ws.onclose = () => handlers.onClose();
      ws.onerror = () => {};
      return { send: (t) => ws.send(t), close: () => ws.close() };
    },
    now: () => performance.now(),
    schedule: (fn, ms) => setTimeout(fn, ms),
    cancel: (id) => clearTimeout(id as number),
  };
}

export interface StreamCallbacks {
  onFrame(frame: SensorReadingDoc): void;
  onConnected(): void;
  onDisconnected(): void;
  onStale(): void;
}

export class ServiceClient {
  private io: Io;
  private lastSubmitAt = -Infinity;
  private lastFrameT = 0;
  private pending: Targets | null = null;
  private flushTimer: unknown = null;
  private socket: SocketHandle | null = null;
  private reconnectAttempt = 0;
  private staleTimer: unknown = null;
  private stopped = false;

  constructor(io: Io) {
    this.io = io;
  }

  async fetchConfigs(): Promise<ConfigsDoc> {
    const res = await this.io.http("/configs", "GET");
    return res.body as ConfigsDoc;
  }

  async fetchState(): Promise<SessionStateDoc> {
    const res = await this.io.http("/state", "GET");
    return res.body as SessionStateDoc;
  }

  async switchController(kind: string): Promise<boolean> {
    const res = await this.io.http("/controller", "POST", { kind });
    return res.status === 200;
  }

  async calibrate(): Promise<boolean> {
    const res = await this.io.http("/calibrate", "POST", {});
    return res.status === 200;
  }

  /** Queue a target set for submission. Values are clamped here so an
   * out-of-limit edit can never leave the client; submissions are rate
   * limited to one per MIN_SUBMIT_INTERVAL_MS, latest edit winning. */
  submitTargets(targets: Targets, geometry: GeometryDoc, thumbBox: Box3): void {
    this.pending = clampTargets(targets, geometry, thumbBox);
    const since = this.io.now() - this.lastSubmitAt;
    if (since >= MIN_SUBMIT_INTERVAL_MS) {
      void this.flush();
    } else if (this.flushTimer === null) {
      this.flushTimer = this.io.schedule(() => {
        this.flushTimer = null;
        void this.flush();
      }, MIN_SUBMIT_INTERVAL_MS - since);
    }
  }

  private async flush(): Promise<void> {
    if (this.pending === null) return;
    const targets = this.pending;
    this.pending = null;
    this.lastSubmitAt = this.io.now();
    // timestamps must be strictly increasing for the session
    this.lastFrameT = Math.max(this.lastFrameT + 1e-3, this.io.now());
    const frame: TeleopFrameDoc = {
      schema: SCHEMA_VERSION,
      kind: "teleop_frame",
      t_ms: this.lastFrameT,
      targets,
      source: "ui",
    };
    await this.io.http("/target", "POST", frame);
  }

  /** Open the stream; reconnect with exponential backoff forever until
   * stop() is called. A quiet second on an open socket flags staleness. */
  connect(callbacks: StreamCallbacks): void {
    if (this.stopped) return;
    const armStale = () => {
      if (this.staleTimer !== null) this.io.cancel(this.staleTimer);
      this.staleTimer = this.io.schedule(() => callbacks.onStale(), STALE_AFTER_MS);
    };
    this.socket = this.io.openSocket("/stream", {
      onOpen: () => {
        this.reconnectAttempt = 0;
        callbacks.onConnected();
        armStale();
      },
      onMessage: (text) => {
        const doc = JSON.parse(text);
        if (doc && doc.kind === "sensor_reading") {
          callbacks.onFrame(doc as SensorReadingDoc);
          armStale();
        }
      },
      onClose: () => {
        this.socket = null;
        if (this.staleTimer !== null) this.io.cancel(this.staleTimer);
        callbacks.onDisconnected();
        if (this.stopped) return;
        const delay = backoffDelays(this.reconnectAttempt);
        this.reconnectAttempt += 1;
        this.io.schedule(() => this.connect(callbacks), delay);
      },
    });
  }

  stop(): void {
    this.stopped = true;
    if (this.staleTimer !== null) this.io.cancel(this.staleTimer);
    if (this.flushTimer !== null) this.io.cancel(this.flushTimer);
    this.socket?.close();
  }
}
