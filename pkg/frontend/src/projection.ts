/** Orthographic projection of palm-frame points onto the canvas. */

import { Vec3 } from "./types.js";

export interface View {
  yawDeg: number; // rotation about the palm z axis
  tiltDeg: number; // rotation about the screen x axis
  scale: number; // px per mm
  cx: number; // canvas centre, px
  cy: number;
}

export interface Projected {
  x: number;
  y: number;
  depth: number;
}

export function project(p: Vec3, view: View): Projected {
  const ya = (view.yawDeg * Math.PI) / 180;
  const ta = (view.tiltDeg * Math.PI) / 180;
  // yaw about z
  const x1 = p[0] * Math.cos(ya) - p[1] * Math.sin(ya);
  const y1 = p[0] * Math.sin(ya) + p[1] * Math.cos(ya);
  const z1 = p[2];
  // tilt about x
  const y2 = y1 * Math.cos(ta) - z1 * Math.sin(ta);
  const z2 = y1 * Math.sin(ta) + z1 * Math.cos(ta);
  return {
    x: view.cx + x1 * view.scale,
    y: view.cy - y2 * view.scale,
    depth: z2,
  };
}

/** Invert the projection within the view plane at a fixed depth: used to
 * drag the thumb target with the mouse. Returns the palm-frame point whose
 * projection lands on (px, py) while keeping the given depth coordinate. */
export function unprojectAtDepth(px: number, py: number, depth: number, view: View): Vec3 {
  const ya = (view.yawDeg * Math.PI) / 180;
  const ta = (view.tiltDeg * Math.PI) / 180;
  const x1 = (px - view.cx) / view.scale;
  const y2 = (view.cy - py) / view.scale;
  // solve tilt: y2 = y1 cos - z1 sin; depth = y1 sin + z1 cos
  const y1 = y2 * Math.cos(ta) + depth * Math.sin(ta);
  const z1 = -y2 * Math.sin(ta) + depth * Math.cos(ta);
  // undo yaw
  const x = x1 * Math.cos(ya) + y1 * Math.sin(ya);
  const y = -x1 * Math.sin(ya) + y1 * Math.cos(ya);
  return [x, y, z1];
}
