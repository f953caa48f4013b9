import { describe, expect, it } from "vitest";
import {
  BACKOFF_BASE_MS,
  BACKOFF_CAP_MS,
  MIN_SUBMIT_INTERVAL_MS,
  STALE_AFTER_MS,
  ServiceClient,
  backoffDelays,
} from "../src/client.js";
import type { HttpResult, Io, SocketHandle, SocketHandlers } from "../src/client.js";
import { tipReachBox } from "../src/fk.js";
import type { ConfigsDoc, Targets, TeleopFrameDoc } from "../src/types.js";
import configsFixture from "./fixtures/configs.json";

const configs = configsFixture as unknown as ConfigsDoc;
const geometry = configs.geometry;
const thumbBox = tipReachBox(geometry.fingers.thumb);

interface HttpCall {
  path: string;
  method: string;
  body: unknown;
}

class FakeSocket implements SocketHandle {
  sent: string[] = [];
  closed = false;
  constructor(
    public path: string,
    public handlers: SocketHandlers,
  ) {}
  send(text: string): void {
    this.sent.push(text);
  }
  close(): void {
    if (this.closed) return;
    this.closed = true;
    this.handlers.onClose();
  }
}

class FakeIo implements Io {
  t = 0;
  httpCalls: HttpCall[] = [];
  sockets: FakeSocket[] = [];
  respond: (call: HttpCall) => HttpResult = () => ({ status: 200, body: {} });
  private timers: { id: number; at: number; fn: () => void }[] = [];
  private nextId = 1;

  async http(path: string, method: string, body?: unknown): Promise<HttpResult> {
    const call = { path, method, body };
    this.httpCalls.push(call);
    return this.respond(call);
  }

  openSocket(path: string, handlers: SocketHandlers): SocketHandle {
    const s = new FakeSocket(path, handlers);
    this.sockets.push(s);
    return s;
  }

  now(): number {
    return this.t;
  }

  schedule(fn: () => void, ms: number): unknown {
    const id = this.nextId++;
    this.timers.push({ id, at: this.t + ms, fn });
    return id;
  }

  cancel(id: unknown): void {
    this.timers = this.timers.filter((t) => t.id !== id);
  }

  /** Advance the virtual clock, firing due timers in order. */
  advance(ms: number): void {
    const end = this.t + ms;
    for (;;) {
      const due = this.timers.filter((t) => t.at <= end).sort((a, b) => a.at - b.at)[0];
      if (!due) break;
      this.timers = this.timers.filter((t) => t.id !== due.id);
      this.t = due.at;
      due.fn();
    }
    this.t = end;
  }

  pendingTimers(): number {
    return this.timers.length;
  }

  targetPosts(): TeleopFrameDoc[] {
    return this.httpCalls.filter((c) => c.path === "/target").map((c) => c.body as TeleopFrameDoc);
  }
}

function someTargets(scale: number): Targets {
  return {
    thumb: [60 * scale, 10, -120],
    index: [30 * scale, 20, 20],
    middle: [0, 0, 0],
    ring: [0, 0, 0],
    pinky: [0, 0, 0],
  };
}

describe("submitTargets", () => {
  it("posts immediately when idle", () => {
    const io = new FakeIo();
    const client = new ServiceClient(io);
    io.t = 1000;
    client.submitTargets(someTargets(1), geometry, thumbBox);
    const posts = io.targetPosts();
    expect(posts.length).toBe(1);
    expect(posts[0].kind).toBe("teleop_frame");
    expect(posts[0].source).toBe("ui");
    expect(posts[0].targets.index).toEqual([30, 20, 20]);
  });

  it("debounces a burst to one trailing post carrying the latest edit", () => {
    const io = new FakeIo();
    const client = new ServiceClient(io);
    io.t = 1000;
    client.submitTargets(someTargets(1), geometry, thumbBox);
    io.advance(5);
    for (let i = 2; i <= 9; i++) {
      client.submitTargets(someTargets(0.1 * i), geometry, thumbBox);
      io.advance(2);
    }
    expect(io.targetPosts().length).toBe(1);
    io.advance(MIN_SUBMIT_INTERVAL_MS);
    const posts = io.targetPosts();
    expect(posts.length).toBe(2);
    expect(posts[1].targets.index[0]).toBeCloseTo(30 * 0.9, 12);
  });

  it("timestamps are strictly increasing even on a frozen clock", () => {
    const io = new FakeIo();
    const client = new ServiceClient(io);
    io.t = 500;
    client.submitTargets(someTargets(1), geometry, thumbBox);
    io.advance(MIN_SUBMIT_INTERVAL_MS);
    io.t = 500 + MIN_SUBMIT_INTERVAL_MS;
    client.submitTargets(someTargets(2), geometry, thumbBox);
    io.advance(MIN_SUBMIT_INTERVAL_MS);
    client.submitTargets(someTargets(0.5), geometry, thumbBox);
    const [a, b, c] = io.targetPosts().map((p) => p.t_ms);
    expect(a).toBeLessThan(b);
    expect(b).toBeLessThan(c);
  });

  it("clamps every submission: out-of-limit edits never leave the client", () => {
    const io = new FakeIo();
    const client = new ServiceClient(io);
    io.t = 100;
    const wild: Targets = {
      thumb: [1e5, -1e5, 0],
      index: [999, -1, 60],
      middle: [0, 0, 0],
      ring: [0, 0, 0],
      pinky: [0, 0, 0],
    };
    client.submitTargets(wild, geometry, thumbBox);
    const [post] = io.targetPosts();
    expect(post.targets.thumb[0]).toBe(thumbBox.max[0]);
    expect(post.targets.thumb[1]).toBe(thumbBox.min[1]);
    expect(post.targets.index[0]).toBe(geometry.fingers.index.limits_deg[0]);
    expect(post.targets.index[1]).toBe(0);
    expect(post.targets.index[2]).toBe(60);
  });
});

function callbackRecorder() {
  const events: string[] = [];
  return {
    events,
    callbacks: {
      onFrame: () => events.push("frame"),
      onConnected: () => events.push("up"),
      onDisconnected: () => events.push("down"),
      onStale: () => events.push("stale"),
    },
  };
}

describe("stream reconnect", () => {
  it("backs off exponentially to the cap and resets after a successful open", () => {
    expect([0, 1, 2, 3, 4, 5, 6].map(backoffDelays)).toEqual([
      250, 500, 1000, 2000, 4000, 8000, 8000,
    ]);

    const io = new FakeIo();
    const client = new ServiceClient(io);
    const { events, callbacks } = callbackRecorder();
    client.connect(callbacks);
    expect(io.sockets.length).toBe(1);

    const reopenGaps: number[] = [];
    for (let round = 0; round < 6; round++) {
      const before = io.t;
      io.sockets[io.sockets.length - 1].close();
      const socketsBefore = io.sockets.length;
      io.advance(BACKOFF_CAP_MS + 1);
      expect(io.sockets.length).toBe(socketsBefore + 1);
      reopenGaps.push(io.t - before);
    }
    // gap grows by the schedule; exact delay recovered from timer firing order
    expect(events.filter((e) => e === "down").length).toBe(6);

    // a successful open resets the attempt counter
    io.sockets[io.sockets.length - 1].handlers.onOpen();
    io.sockets[io.sockets.length - 1].close();
    const before = io.sockets.length;
    io.advance(BACKOFF_BASE_MS);
    expect(io.sockets.length).toBe(before + 1);
    expect(events).toContain("up");
  });

  it("delays follow 250, 500, 1000 exactly", () => {
    const io = new FakeIo();
    const client = new ServiceClient(io);
    const { callbacks } = callbackRecorder();
    client.connect(callbacks);
    for (const expected of [250, 500, 1000]) {
      io.sockets[io.sockets.length - 1].close();
      const count = io.sockets.length;
      io.advance(expected - 1);
      expect(io.sockets.length).toBe(count);
      io.advance(1);
      expect(io.sockets.length).toBe(count + 1);
    }
  });

  it("flags staleness after a quiet second and rearms on data", () => {
    const io = new FakeIo();
    const client = new ServiceClient(io);
    const { events, callbacks } = callbackRecorder();
    client.connect(callbacks);
    const sock = io.sockets[0];
    sock.handlers.onOpen();
    io.advance(STALE_AFTER_MS - 1);
    expect(events).not.toContain("stale");
    sock.handlers.onMessage(JSON.stringify({ kind: "sensor_reading", tick: 1 }));
    io.advance(STALE_AFTER_MS - 1);
    expect(events).not.toContain("stale");
    io.advance(2);
    expect(events.filter((e) => e === "stale").length).toBe(1);
  });

  it("ignores non-reading messages", () => {
    const io = new FakeIo();
    const client = new ServiceClient(io);
    const { events, callbacks } = callbackRecorder();
    client.connect(callbacks);
    io.sockets[0].handlers.onOpen();
    io.sockets[0].handlers.onMessage(JSON.stringify({ kind: "error", reason: "bad frame" }));
    expect(events.filter((e) => e === "frame").length).toBe(0);
  });

  it("stop() closes the stream and never reconnects", () => {
    const io = new FakeIo();
    const client = new ServiceClient(io);
    const { callbacks } = callbackRecorder();
    client.connect(callbacks);
    io.sockets[0].handlers.onOpen();
    client.stop();
    expect(io.sockets[0].closed).toBe(true);
    io.advance(BACKOFF_CAP_MS * 4);
    expect(io.sockets.length).toBe(1);
    expect(io.pendingTimers()).toBe(0);
  });
});
