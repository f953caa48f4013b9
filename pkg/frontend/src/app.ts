/** DOM wiring: one rendering loop over a single view model. */

import { browserIo, ServiceClient } from "./client.js";
import { chainTip } from "./fk.js";
import { clampTargets } from "./limits.js";
import { project, unprojectAtDepth, View } from "./projection.js";
import { drawSkeleton, drawThumbTarget } from "./skeleton.js";
import {
  applyFrame,
  applyState,
  editTarget,
  initModel,
  markStale,
  setConnection,
  ViewModel,
} from "./state.js";
import { FINGERS, Finger, Vec3 } from "./types.js";

const client = new ServiceClient(browserIo(location.origin));
let model: ViewModel | null = null;
let grabbed = false;

const view: View = { yawDeg: -20, tiltDeg: -65, scale: 3.2, cx: 330, cy: 330 };

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
}

function submit(): void {
  if (!model) return;
  client.submitTargets(model.targets, model.configs.geometry, model.thumbBox);
}

function buildSliders(): void {
  if (!model) return;
  const host = $("sliders");
  host.textContent = "";
  for (const finger of FINGERS.slice(1) as Finger[]) {
    const chain = model.configs.geometry.fingers[finger];
    const block = document.createElement("div");
    block.className = "finger";
    const title = document.createElement("h3");
    title.textContent = finger;
    block.appendChild(title);
    chain.limits_deg.forEach((limit, j) => {
      const row = document.createElement("label");
      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = "0";
      slider.max = String(limit);
      slider.step = "0.1";
      slider.value = String(model!.targets[finger][j]);
      slider.dataset.finger = finger;
      slider.dataset.joint = String(j);
      const readout = document.createElement("span");
      readout.textContent = `${Number(slider.value).toFixed(1)}°`;
      slider.addEventListener("input", () => {
        if (!model) return;
        const next = [...model.targets[finger]] as Vec3;
        next[j] = Number(slider.value);
        model = editTarget(model, finger, next);
        readout.textContent = `${next[j].toFixed(1)}°`;
        submit();
      });
      row.appendChild(slider);
      row.appendChild(readout);
      block.appendChild(row);
    });
    host.appendChild(block);
  }
}

function buildControllerSwitch(): void {
  if (!model) return;
  const select = $("controller") as HTMLSelectElement;
  select.textContent = "";
  for (const kind of model.availableControllers) {
    const opt = document.createElement("option");
    opt.value = kind;
    opt.textContent = kind;
    opt.selected = kind === model.controller;
    select.appendChild(opt);
  }
  select.onchange = async () => {
    await client.switchController(select.value);
    if (model) model = await refreshState(model);
  };
}

async function refreshState(current: ViewModel): Promise<ViewModel> {
  const state = await client.fetchState();
  return applyState(current, state);
}

function bindCanvas(): void {
  const canvas = $("scene") as HTMLCanvasElement;
  canvas.addEventListener("pointerdown", (ev) => {
    if (!model) return;
    const rect = canvas.getBoundingClientRect();
    const pt = project(model.targets.thumb, view);
    if (Math.hypot(ev.clientX - rect.left - pt.x, ev.clientY - rect.top - pt.y) < 16) {
      grabbed = true;
      canvas.setPointerCapture(ev.pointerId);
    }
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!grabbed || !model) return;
    const rect = canvas.getBoundingClientRect();
    const depth = project(model.targets.thumb, view).depth;
    const next = unprojectAtDepth(
      ev.clientX - rect.left,
      ev.clientY - rect.top,
      depth,
      view,
    );
    const clamped = clampTargets(
      { ...model.targets, thumb: next },
      model.configs.geometry,
      model.thumbBox,
    );
    model = editTarget(model, "thumb", clamped.thumb);
    submit();
  });
  canvas.addEventListener("pointerup", () => {
    grabbed = false;
  });
  canvas.addEventListener("wheel", (ev) => {
    if (!model) return;
    ev.preventDefault();
    const step = ev.deltaY > 0 ? -2 : 2;
    const next: Vec3 = [
      model.targets.thumb[0],
      model.targets.thumb[1],
      model.targets.thumb[2] + step,
    ];
    const clamped = clampTargets(
      { ...model.targets, thumb: next },
      model.configs.geometry,
      model.thumbBox,
    );
    model = editTarget(model, "thumb", clamped.thumb);
    submit();
  });
  ($("view-yaw") as HTMLInputElement).addEventListener("input", (ev) => {
    view.yawDeg = Number((ev.target as HTMLInputElement).value);
  });
  ($("view-tilt") as HTMLInputElement).addEventListener("input", (ev) => {
    view.tiltDeg = Number((ev.target as HTMLInputElement).value);
  });
}

function renderLoop(): void {
  const canvas = $("scene") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const draw = () => {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (model) {
      if (model.frame) drawSkeleton(ctx, model.frame, view);
      drawThumbTarget(ctx, model.targets.thumb, view, grabbed);
      $("error-readout").textContent =
        model.errorMm === null ? "—" : `${model.errorMm.toFixed(1)} mm`;
      $("rate-readout").textContent = `${model.loopRateHz.toFixed(0)} Hz`;
      $("banner").classList.toggle("hidden", !model.stale && model.connected);
      $("banner").textContent = model.connected
        ? "stream stale: no frames for over a second"
        : "disconnected, retrying with backoff";
    }
    requestAnimationFrame(draw);
  };
  draw();
}

async function boot(): Promise<void> {
  const [configs, state] = await Promise.all([client.fetchConfigs(), client.fetchState()]);
  model = initModel(configs, state);
  if (!state.reading) {
    // park the thumb target somewhere reachable before the first frame
    model = editTarget(model, "thumb", chainTip(configs.geometry.fingers.thumb, [20, 20, 20]));
  }
  buildSliders();
  buildControllerSwitch();
  bindCanvas();
  renderLoop();

  $("calibrate").addEventListener("click", async () => {
    ($("calibrate") as HTMLButtonElement).disabled = true;
    $("calibrate").textContent = "calibrating…";
    await client.calibrate();
    if (model) model = await refreshState(model);
    ($("calibrate") as HTMLButtonElement).disabled = false;
    $("calibrate").textContent = "calibrate";
  });

  const poll = async () => {
    if (model) model = await refreshState(model);
    setTimeout(poll, 1000);
  };
  void poll();

  client.connect({
    onFrame: (frame) => {
      if (model) model = applyFrame(model, frame);
    },
    onConnected: () => {
      if (model) model = setConnection(model, true);
      // a reconnect re-reads authoritative state so the view matches it
      void (async () => {
        if (model) model = await refreshState(model);
      })();
    },
    onDisconnected: () => {
      if (model) model = setConnection(model, false);
    },
    onStale: () => {
      if (model) model = markStale(model);
    },
  });
}

void boot();
