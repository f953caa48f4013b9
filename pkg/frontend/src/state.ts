/** The panel's view model and its pure update functions.
 *
 * Everything derives from service documents: a refresh that refetches
 * /configs and /state rebuilds an identical model. Stream frames apply
 * latest-wins; an older tick never overwrites a newer one.
 */

import { Box3, chainTip, tipReachBox } from "./fk.js";
import {
  ConfigsDoc,
  FINGERS,
  Finger,
  SensorReadingDoc,
  SessionStateDoc,
  Targets,
  Vec3,
} from "./types.js";

export interface ViewModel {
  configs: ConfigsDoc;
  thumbBox: Box3;
  controller: string;
  availableControllers: string[];
  mode: "controller" | "direct";
  rateHz: number;
  loopRateHz: number;
  calibrating: boolean;
  frame: SensorReadingDoc | null;
  targets: Targets;
  /** |thumb target - streamed thumb fingertip|, mm, or null before data. */
  errorMm: number | null;
  connected: boolean;
  stale: boolean;
  digests: SessionStateDoc["digests"];
}

function dist3(a: Vec3, b: Vec3): number {
  const dx = a[0] - b[0];
  const dy = a[1] - b[1];
  const dz = a[2] - b[2];
  return Math.sqrt(dx * dx + dy * dy + dz * dz);
}

/** Targets matching the hand's current pose: thumb at its streamed
 * fingertip, fingers at their streamed joint angles. */
export function targetsFromReading(reading: SensorReadingDoc): Targets {
  const targets = {} as Targets;
  for (let f = 0; f < FINGERS.length; f++) {
    const finger = FINGERS[f];
    if (finger === "thumb") {
      targets.thumb = [...reading.fingertips[0]] as Vec3;
    } else {
      targets[finger] = [
        reading.joints[3 * f],
        reading.joints[3 * f + 1],
        reading.joints[3 * f + 2],
      ];
    }
  }
  return targets;
}

function neutralTargets(configs: ConfigsDoc): Targets {
  const thumbRest = chainTip(configs.geometry.fingers.thumb, [0, 0, 0]);
  return {
    thumb: thumbRest,
    index: [0, 0, 0],
    middle: [0, 0, 0],
    ring: [0, 0, 0],
    pinky: [0, 0, 0],
  };
}

/** Build the model purely from the two service documents. */
export function initModel(configs: ConfigsDoc, state: SessionStateDoc): ViewModel {
  const targets = state.reading ? targetsFromReading(state.reading) : neutralTargets(configs);
  const model: ViewModel = {
    configs,
    thumbBox: tipReachBox(configs.geometry.fingers.thumb),
    controller: state.controller,
    availableControllers: state.available_controllers,
    mode: state.mode,
    rateHz: state.rate_hz,
    loopRateHz: state.loop.rate_hz,
    calibrating: state.calibrating,
    frame: state.reading,
    targets,
    errorMm: null,
    connected: true,
    stale: false,
    digests: state.digests,
  };
  return withError(model);
}

function withError(model: ViewModel): ViewModel {
  if (model.frame === null) return { ...model, errorMm: null };
  const tip = model.frame.fingertips[0] as Vec3;
  return { ...model, errorMm: dist3(model.targets.thumb, tip) };
}

/** Latest-wins frame application; stale or replayed ticks are dropped. */
export function applyFrame(model: ViewModel, frame: SensorReadingDoc): ViewModel {
  if (model.frame !== null && frame.tick <= model.frame.tick) return model;
  return withError({ ...model, frame, stale: false });
}

export function applyState(model: ViewModel, state: SessionStateDoc): ViewModel {
  let next: ViewModel = {
    ...model,
    controller: state.controller,
    availableControllers: state.available_controllers,
    mode: state.mode,
    rateHz: state.rate_hz,
    loopRateHz: state.loop.rate_hz,
    calibrating: state.calibrating,
    digests: state.digests,
  };
  if (state.reading) next = applyFrame(next, state.reading);
  return withError(next);
}

export function editTarget(model: ViewModel, finger: Finger, value: Vec3): ViewModel {
  const targets = { ...model.targets, [finger]: value };
  return withError({ ...model, targets });
}

export function setConnection(model: ViewModel, connected: boolean): ViewModel {
  return { ...model, connected, stale: !connected ? true : model.stale };
}

export function markStale(model: ViewModel): ViewModel {
  return { ...model, stale: true };
}

/** Equality over everything the screen shows; used to verify that a
 * reconnect restores the identical view. */
export function viewEquals(a: ViewModel, b: ViewModel): boolean {
  return JSON.stringify({ ...a, frame: a.frame?.tick ?? null }) ===
    JSON.stringify({ ...b, frame: b.frame?.tick ?? null });
}
