/** Minimal forward kinematics over a geometry document.
 *
 * Mirrors the service's chain layout: keypoint 0 sits one anchor length
 * behind the knuckle, keypoint 1 is the knuckle, then each joint rotates
 * the running frame about its local axis and extends along local +y.
 */

import { ChainDoc, Vec3 } from "./types.js";

type Mat3 = [Vec3, Vec3, Vec3];

const DEG = Math.PI / 180;

function matMul(a: Mat3, b: Mat3): Mat3 {
  const out: number[][] = [[0, 0, 0], [0, 0, 0], [0, 0, 0]];
  for (let i = 0; i < 3; i++)
    for (let j = 0; j < 3; j++)
      for (let k = 0; k < 3; k++) out[i][j] += a[i][k] * b[k][j];
  return out as Mat3;
}

function matVec(m: Mat3, v: Vec3): Vec3 {
  return [
    m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
    m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
    m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
  ];
}

export function rotationAbout(axis: Vec3, angleDeg: number): Mat3 {
  const t = angleDeg * DEG;
  const c = Math.cos(t);
  const s = Math.sin(t);
  const [x, y, z] = axis;
  const ic = 1 - c;
  return [
    [c + x * x * ic, x * y * ic - z * s, x * z * ic + y * s],
    [y * x * ic + z * s, c + y * y * ic, y * z * ic - x * s],
    [z * x * ic - y * s, z * y * ic + x * s, c + z * z * ic],
  ];
}

function baseRotation(chain: ChainDoc): Mat3 {
  const rz = rotationAbout([0, 0, 1], chain.yaw_deg);
  const rx = rotationAbout([1, 0, 0], chain.pitch_deg);
  const ry = rotationAbout([0, 1, 0], chain.roll_deg);
  return matMul(matMul(rz, rx), ry);
}

/** (5, 3) keypoints for one chain at the given three joint angles. */
export function chainKeypoints(chain: ChainDoc, angles: Vec3): Vec3[] {
  let rot = baseRotation(chain);
  let pos: Vec3 = [...chain.base];
  const behind = matVec(rot, [0, chain.anchor_length, 0]);
  const pts: Vec3[] = [
    [pos[0] - behind[0], pos[1] - behind[1], pos[2] - behind[2]],
    [...pos],
  ];
  for (let j = 0; j < 3; j++) {
    rot = matMul(rot, rotationAbout(chain.axes[j], angles[j]));
    const step = matVec(rot, [0, chain.links[j], 0]);
    pos = [pos[0] + step[0], pos[1] + step[1], pos[2] + step[2]];
    pts.push([...pos]);
  }
  return pts;
}

export function chainTip(chain: ChainDoc, angles: Vec3): Vec3 {
  const pts = chainKeypoints(chain, angles);
  return pts[pts.length - 1];
}

export interface Box3 {
  min: Vec3;
  max: Vec3;
}

/** Axis-aligned bound on where a chain's tip can reach, by grid sampling
 * the joint-limit box. Coarse but conservative enough for target clamping
 * when padded slightly inwards by the caller. */
export function tipReachBox(chain: ChainDoc, perAxis = 9): Box3 {
  const min: Vec3 = [Infinity, Infinity, Infinity];
  const max: Vec3 = [-Infinity, -Infinity, -Infinity];
  for (let a = 0; a < perAxis; a++)
    for (let b = 0; b < perAxis; b++)
      for (let c = 0; c < perAxis; c++) {
        const angles: Vec3 = [
          (chain.limits_deg[0] * a) / (perAxis - 1),
          (chain.limits_deg[1] * b) / (perAxis - 1),
          (chain.limits_deg[2] * c) / (perAxis - 1),
        ];
        const tip = chainTip(chain, angles);
        for (let i = 0; i < 3; i++) {
          if (tip[i] < min[i]) min[i] = tip[i];
          if (tip[i] > max[i]) max[i] = tip[i];
        }
      }
  return { min, max };
}
