/** End-to-end panel logic against a live service process.
 *
 * Talks to the service exactly the way the browser panel does (HTTP
 * documents in, teleop frames out) and asserts the closed-loop target
 * behavior the panel's drag interaction relies on.
 */
import { execFileSync, spawn } from "node:child_process";
import type { ChildProcess } from "node:child_process";
import { existsSync } from "node:fs";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { chainTip, tipReachBox } from "../src/fk.js";
import { clampTargets } from "../src/limits.js";
import { initModel, viewEquals } from "../src/state.js";
import { SCHEMA_VERSION } from "../src/types.js";
import type { ConfigsDoc, SessionStateDoc, Targets, Vec3 } from "../src/types.js";

const RUN_DIR = "/tmp/tendonhand-panel-itest";
const PORT = 8631;
const BASE = `http://127.0.0.1:${PORT}`;
const PY = "python3";

let server: ChildProcess | null = null;
let tCounter = 0;

function cli(...args: string[]): void {
  execFileSync(PY, ["-m", "tendonhand.cli", "--run-dir", RUN_DIR, "--seed", "5", ...args], {
    cwd: "/root/pkg",
    stdio: "pipe",
    timeout: 240_000,
  });
}

async function getJson<T>(path: string): Promise<T> {
  const resp = await fetch(BASE + path);
  return (await resp.json()) as T;
}

async function post(path: string, body: unknown): Promise<{ status: number; body: unknown }> {
  const resp = await fetch(BASE + path, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
  return { status: resp.status, body: await resp.json() };
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function submit(targets: Targets, configs: ConfigsDoc): Promise<void> {
  const box = tipReachBox(configs.geometry.fingers.thumb);
  tCounter += 1;
  const frame = {
    schema: SCHEMA_VERSION,
    kind: "teleop_frame",
    t_ms: tCounter,
    targets: clampTargets(targets, configs.geometry, box),
    source: "ui",
  };
  const res = await post("/target", frame);
  expect(res.status).toBe(200);
}

function dist3(a: Vec3, b: Vec3): number {
  const dx = a[0] - b[0];
  const dy = a[1] - b[1];
  const dz = a[2] - b[2];
  return Math.sqrt(dx * dx + dy * dy + dz * dz);
}

beforeAll(async () => {
  if (!existsSync(`${RUN_DIR}/controllers/manifest_mlp.json`)) {
    cli("calibrate", "--readings", "64");
    cli("gen-data", "--episodes", "150", "--steps", "60");
    cli("train", "--kind", "knn", "--kind", "mlp");
  }
  server = spawn(
    PY,
    [
      "-m",
      "tendonhand.cli",
      "--run-dir",
      RUN_DIR,
      "serve",
      "--port",
      String(PORT),
      "--controller",
      "knn",
    ],
    { cwd: "/root/pkg", stdio: "pipe" },
  );
  for (let i = 0; i < 150; i++) {
    try {
      await getJson<SessionStateDoc>("/state");
      return;
    } catch {
      await sleep(100);
    }
  }
  throw new Error("service did not come up");
}, 300_000);

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("service documents", () => {
  it("serves configs and state the panel can boot from", async () => {
    const configs = await getJson<ConfigsDoc>("/configs");
    const state = await getJson<SessionStateDoc>("/state");
    expect(configs.kind).toBe("service_configs");
    expect(configs.controllers).toContain("knn");
    expect(configs.controllers).toContain("mlp");
    expect(state.kind).toBe("session_state");
    expect(state.mode).toBe("controller");
    expect(state.rate_hz).toBeGreaterThanOrEqual(25);
  });

  it("the view model depends only on the served documents", async () => {
    const c1 = await getJson<ConfigsDoc>("/configs");
    const c2 = await getJson<ConfigsDoc>("/configs");
    expect(JSON.stringify(c1)).toBe(JSON.stringify(c2));
    const state = await getJson<SessionStateDoc>("/state");
    expect(viewEquals(initModel(c1, state), initModel(c2, state))).toBe(true);
  });
});

describe("closed-loop dragging", () => {
  it(
    "a dragged thumb target is reached within 5 mm inside a second",
    async () => {
      const configs = await getJson<ConfigsDoc>("/configs");
      const thumbGoal = chainTip(configs.geometry.fingers.thumb, [25, 20, 15]);
      const targets: Targets = {
        thumb: thumbGoal,
        index: [30, 45, 20],
        middle: [0, 0, 0],
        ring: [0, 0, 0],
        pinky: [0, 0, 0],
      };
      const t0 = Date.now();
      await submit(targets, configs);
      let best = Infinity;
      let reachedAt = Infinity;
      while (Date.now() - t0 < 1500) {
        const state = await getJson<SessionStateDoc>("/state");
        if (state.reading) {
          const err = dist3(state.reading.fingertips[0] as Vec3, thumbGoal);
          if (err < best) best = err;
          if (err < 5 && reachedAt === Infinity) reachedAt = Date.now() - t0;
        }
        if (reachedAt !== Infinity && Date.now() - t0 >= 1000) break;
        await sleep(50);
      }
      expect(best).toBeLessThan(5);
      expect(reachedAt).toBeLessThanOrEqual(1000);
      const state = await getJson<SessionStateDoc>("/state");
      expect(state.reading!.joints[3]).toBeGreaterThan(15);
    },
    20_000,
  );
});

describe("controller switching", () => {
  it(
    "switch applies between ticks and the loop keeps running",
    async () => {
      const before = await getJson<SessionStateDoc>("/state");
      const res = await post("/controller", { kind: "mlp" });
      expect(res.status).toBe(200);
      let after = await getJson<SessionStateDoc>("/state");
      const deadline = Date.now() + 2000;
      while (after.controller !== "mlp" && Date.now() < deadline) {
        await sleep(40);
        after = await getJson<SessionStateDoc>("/state");
      }
      expect(after.controller).toBe("mlp");
      await sleep(200);
      const later = await getJson<SessionStateDoc>("/state");
      expect(later.tick).toBeGreaterThan(before.tick);
      expect(later.loop.ticks).toBeGreaterThan(after.loop.ticks);
      await post("/controller", { kind: "knn" });
    },
    20_000,
  );
});

describe("rejection paths", () => {
  it("malformed frames get a reasoned 422", async () => {
    const res = await post("/target", { kind: "teleop_frame" });
    expect(res.status).toBe(422);
    const body = res.body as { accepted: boolean; reason: string };
    expect(body.accepted).toBe(false);
    expect(body.reason.length).toBeGreaterThan(0);
  });

  it("unknown controllers get a reasoned 422", async () => {
    const res = await post("/controller", { kind: "nope" });
    expect(res.status).toBe(422);
  });
});
