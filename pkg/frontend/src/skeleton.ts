/** Canvas rendering of the streamed hand skeleton and the thumb target. */

import { project, Projected, View } from "./projection.js";
import { SensorReadingDoc, Vec3 } from "./types.js";

const FINGER_COLORS = ["#e4572e", "#4c9f70", "#4c9f70", "#4c9f70", "#4c9f70"];

export function drawSkeleton(
  ctx: CanvasRenderingContext2D,
  reading: SensorReadingDoc,
  view: View,
): void {
  for (let f = 0; f < reading.keypoints.length; f++) {
    const chain = reading.keypoints[f].map((p) => project(p as Vec3, view));
    ctx.strokeStyle = FINGER_COLORS[f];
    ctx.lineWidth = 2.5;
    ctx.beginPath();
    ctx.moveTo(chain[0].x, chain[0].y);
    for (let k = 1; k < chain.length; k++) ctx.lineTo(chain[k].x, chain[k].y);
    ctx.stroke();
    for (const pt of chain) dot(ctx, pt, 3, FINGER_COLORS[f]);
    dot(ctx, chain[chain.length - 1], 4.5, "#222");
  }
}

export function drawThumbTarget(
  ctx: CanvasRenderingContext2D,
  target: Vec3,
  view: View,
  grabbed: boolean,
): Projected {
  const pt = project(target, view);
  ctx.strokeStyle = grabbed ? "#b8860b" : "#8862d0";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(pt.x, pt.y, 9, 0, 2 * Math.PI);
  ctx.stroke();
  ctx.beginPath();
  ctx.moveTo(pt.x - 13, pt.y);
  ctx.lineTo(pt.x + 13, pt.y);
  ctx.moveTo(pt.x, pt.y - 13);
  ctx.lineTo(pt.x, pt.y + 13);
  ctx.stroke();
  return pt;
}

function dot(ctx: CanvasRenderingContext2D, pt: Projected, r: number, color: string): void {
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.arc(pt.x, pt.y, r, 0, 2 * Math.PI);
  ctx.fill();
}
