/** Target clamping: the panel never submits an out-of-limit value. */

import { Box3 } from "./fk.js";
import { Finger, GeometryDoc, Targets, Vec3 } from "./types.js";

export function clamp(value: number, lo: number, hi: number): number {
  return value < lo ? lo : value > hi ? hi : value;
}

/** Joint-angle targets live in [0, limit]; a slider pinned at the end
 * submits the limit itself, bit for bit. */
export function clampJoints(finger: Finger, values: Vec3, geometry: GeometryDoc): Vec3 {
  const limits = geometry.fingers[finger].limits_deg;
  return [
    clamp(values[0], 0, limits[0]),
    clamp(values[1], 0, limits[1]),
    clamp(values[2], 0, limits[2]),
  ];
}

export function clampToBox(point: Vec3, box: Box3): Vec3 {
  return [
    clamp(point[0], box.min[0], box.max[0]),
    clamp(point[1], box.min[1], box.max[1]),
    clamp(point[2], box.min[2], box.max[2]),
  ];
}

/** Clamp a full target set: thumb fingertip into its reach box, finger
 * joints into their limit ranges. */
export function clampTargets(targets: Targets, geometry: GeometryDoc, thumbBox: Box3): Targets {
  return {
    thumb: clampToBox(targets.thumb, thumbBox),
    index: clampJoints("index", targets.index, geometry),
    middle: clampJoints("middle", targets.middle, geometry),
    ring: clampJoints("ring", targets.ring, geometry),
    pinky: clampJoints("pinky", targets.pinky, geometry),
  };
}

export function isFinite3(v: Vec3): boolean {
  return Number.isFinite(v[0]) && Number.isFinite(v[1]) && Number.isFinite(v[2]);
}
