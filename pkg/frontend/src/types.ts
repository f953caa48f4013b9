/** JSON document shapes exchanged with the service. */

export const SCHEMA_VERSION = 1;

export const FINGERS = ["thumb", "index", "middle", "ring", "pinky"] as const;
export type Finger = (typeof FINGERS)[number];

export type Vec3 = [number, number, number];

export interface SensorReadingDoc {
  schema: number;
  kind: "sensor_reading";
  tick: number;
  t_ms: number;
  commanded: number[];
  actual: number[];
  keypoints: number[][][]; // (5, 5, 3) mm
  fingertips: number[][]; // (5, 3) mm
  joints: number[]; // (15,) deg
}

export interface LoopStatsDoc {
  ticks: number;
  misses: number;
  rate_hz: number;
  p99_lateness_ms: number;
  max_lateness_ms: number;
}

export interface SessionStateDoc {
  schema: number;
  kind: "session_state";
  mode: "controller" | "direct";
  controller: string;
  available_controllers: string[];
  rate_hz: number;
  calibrating: boolean;
  digests: { plant: string; geometry: string; calibration: string };
  loop: LoopStatsDoc;
  reading: SensorReadingDoc | null;
  tick: number;
}

export interface ChainDoc {
  base: Vec3;
  yaw_deg: number;
  pitch_deg: number;
  roll_deg: number;
  anchor_length: number;
  links: Vec3;
  axes: [Vec3, Vec3, Vec3];
  limits_deg: Vec3;
}

export interface GeometryDoc {
  schema: number;
  kind: "geometry";
  units: { length: string; angle: string };
  fingers: Record<Finger, ChainDoc>;
}

export interface ConfigsDoc {
  schema: number;
  kind: "service_configs";
  geometry: GeometryDoc;
  plant: { kind: "plant"; motor_min: number[]; motor_max: number[] };
  calibration: { kind: "calibration"; motor_min: number[]; motor_max: number[] };
  controllers: string[];
}

export interface TeleopFrameDoc {
  schema: number;
  kind: "teleop_frame";
  t_ms: number;
  targets: Record<Finger, number[]>;
  source: "ui" | "replay-file";
}

/** Per-finger editable target: thumb is a fingertip (mm), others joint angles (deg). */
export type Targets = Record<Finger, Vec3>;
