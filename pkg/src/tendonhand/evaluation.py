"""Validation protocols: replay scoring, opposition sampling, range of motion.

Two target-set generators mirror the two test regimes. The robot set
drives the noiseless plant with held-out random walks and records the
resulting poses, so every target is reachable and in-distribution. The
human-like set synthesizes smooth sinusoidal joint trajectories with
deliberately decoupled PIP/DIP phases and near-full-range amplitudes:
each pose respects the joint-limit box, but coupled joints leave the
plant's reachable manifold and the motion amplitude exceeds anything a
random walk visits, which is exactly what hand-worn glove data does to
a controller trained on self-collected walks.

Replay scoring runs a full-hand controller over a target stream and
reports per-axis mean absolute fingertip error in cm, per finger and
overall. All scoring uses the noiseless plant so a report is exactly
reproducible from its digests and seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import configio
from .calibration import CalibrationResult
from .controllers import HandController
from .datagen import random_walk_commands
from .errors import DigestMismatchError
from .geometry import (
    HandGeometry,
    chain_tips_batch,
    forward_kinematics_batch,
    geometry_digest,
    joint_angles_batch,
)
from .layout import FINGER_JOINTS, FINGERS, MOTOR_JOINTS, N_MOTORS
from .plant import PlantConfig, actuate_batch, plant_digest

FINGER_PAIRS = tuple(f"thumb-{f}" for f in FINGERS[1:])
CONTACT_RADIUS_MM = 5.0


@dataclass(eq=False)
class ValidationSet:
    kind: str  # "robot" or "humanlike"
    frames: np.ndarray  # (T, 5, 5, 3) target keypoint frames
    joints_deg: np.ndarray  # (T, 15) ground-truth joint angles behind the frames
    seed: int
    params: dict = field(default_factory=dict)
    plant_digest: str = ""
    geometry_digest: str = ""

    def fingertips(self) -> np.ndarray:
        return self.frames[:, :, -1, :]

    def joints(self) -> np.ndarray:
        """Joint angles as a consumer would measure them from the frames."""
        return joint_angles_batch(self.frames)

    def finger_states(self, finger: str) -> np.ndarray:
        """(T, 3) stream of per-finger controller targets.

        Finger targets come from the generator's own joint vector, not
        re-measured from the frames, so serializing targets and replaying
        them reproduces scoring bit for bit.
        """
        if finger == "thumb":
            return self.fingertips()[:, 0, :]
        lo, _, hi = FINGER_JOINTS[finger]
        return self.joints_deg[:, lo : hi + 1]


@dataclass(eq=False)
class EvalReport:
    controller: str
    set_kind: str
    steps: int
    per_finger_cm: dict[str, np.ndarray]  # finger -> (3,) per-axis mean |err|
    overall_cm: np.ndarray  # (3,)
    digests: dict[str, str]

    def mean_cm(self) -> float:
        return float(self.overall_cm.mean())


def make_robot_validation(
    config: PlantConfig,
    geometry: HandGeometry,
    n_poses: int,
    seed: int,
    motor_lo: np.ndarray | None = None,
    motor_hi: np.ndarray | None = None,
    step_size: float = 2.0,
) -> ValidationSet:
    """Reachable poses from one held-out random walk over every motor.

    The walk statistics match data collection, so these targets probe
    in-distribution accuracy; only the seed differs from training.
    """
    if n_poses < 1:
        raise ValueError("n_poses must be >= 1")
    lo = config.motor_min if motor_lo is None else np.asarray(motor_lo, dtype=float)
    hi = config.motor_max if motor_hi is None else np.asarray(motor_hi, dtype=float)
    rng = np.random.default_rng(seed)
    commands = random_walk_commands(rng, lo, hi, n_poses, step_size)
    joints = actuate_batch(config, geometry, commands)
    frames = forward_kinematics_batch(geometry, joints)
    return ValidationSet(
        kind="robot",
        frames=frames,
        joints_deg=joints,
        seed=seed,
        params={"n_poses": n_poses, "step_size": step_size},
        plant_digest=plant_digest(config),
        geometry_digest=geometry_digest(geometry),
    )


def make_humanlike_validation(
    geometry: HandGeometry,
    n_poses: int,
    seed: int,
    cycles: float = 2.5,
    phase_lag: float = 1.5,
    amplitude: tuple[float, float] = (0.75, 0.98),
) -> ValidationSet:
    """Smooth full-range joint sinusoids, PIP and DIP deliberately out
    of phase.

    Every pose sits inside the joint-limit box, but the coupled joints
    leave the plant's PIP=DIP manifold and the per-cycle travel is far
    beyond a random walk's diffusive wander.
    """
    if n_poses < 1:
        raise ValueError("n_poses must be >= 1")
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, n_poses)
    joints = np.zeros((n_poses, 15))
    limits = geometry.joint_limits()
    for f, finger in enumerate(FINGERS):
        j0 = 3 * f
        freq = cycles * rng.uniform(0.8, 1.25)
        base_phase = rng.uniform(0.0, 2.0 * np.pi)
        for k in range(3):
            amp = rng.uniform(*amplitude)
            phase = base_phase + (phase_lag * k if finger != "thumb" else 0.6 * k)
            limit = limits[j0 + k]
            wave = 0.5 * limit + 0.5 * limit * amp * np.sin(
                2.0 * np.pi * freq * t + phase
            )
            joints[:, j0 + k] = np.clip(wave, 0.0, limit)
    frames = forward_kinematics_batch(geometry, joints)
    return ValidationSet(
        kind="humanlike",
        frames=frames,
        joints_deg=joints,
        seed=seed,
        params={
            "n_poses": n_poses,
            "cycles": cycles,
            "phase_lag": phase_lag,
            "amplitude": list(amplitude),
        },
        geometry_digest=geometry_digest(geometry),
    )


def replay_and_score(
    controller: HandController,
    config: PlantConfig,
    geometry: HandGeometry,
    vset: ValidationSet,
) -> EvalReport:
    """Drive the controller along the target stream; score fingertips.

    The plant is replayed noiselessly, so the report depends only on
    the checkpoints, the target set, and the configs.
    """
    target_tips = vset.fingertips()
    states = {finger: vset.finger_states(finger) for finger in FINGERS}
    controller.reset()
    commands = np.zeros((vset.frames.shape[0], N_MOTORS))
    for step in range(commands.shape[0]):
        commands[step] = controller.step({f: states[f][step] for f in FINGERS})
    joints = actuate_batch(config, geometry, commands)
    frames = forward_kinematics_batch(geometry, joints)
    achieved = frames[:, :, -1, :]
    err_mm = np.abs(achieved - target_tips)  # (T, 5, 3)
    per_finger = {
        finger: err_mm[:, i, :].mean(axis=0) / 10.0 for i, finger in enumerate(FINGERS)
    }
    return EvalReport(
        controller=controller.kind,
        set_kind=vset.kind,
        steps=commands.shape[0],
        per_finger_cm=per_finger,
        overall_cm=err_mm.mean(axis=(0, 1)) / 10.0,
        digests={
            "plant": plant_digest(config),
            "geometry": geometry_digest(geometry),
            "set_seed": str(vset.seed),
            "set_kind": vset.kind,
            "calibration": controller.calibration.digest(),
        },
    )


def distribution_gap(vset: ValidationSet, training_states: dict[str, np.ndarray]) -> float:
    """Mean nearest-training-state distance of the set's finger targets.

    The human-like set must sit strictly farther from the training data
    than the robot set does; this is the scalar both are measured by.
    """
    gaps = []
    for finger in FINGERS:
        targets = vset.finger_states(finger)
        bank = training_states[finger]
        scale = np.maximum(bank.std(axis=0), 1e-9)
        tz = targets / scale
        bz = bank / scale
        d2 = (
            (tz * tz).sum(axis=1)[:, None]
            - 2.0 * tz @ bz.T
            + (bz * bz).sum(axis=1)[None, :]
        )
        gaps.append(np.sqrt(np.maximum(d2.min(axis=1), 0.0)).mean())
    return float(np.mean(gaps))


def fingertip_intersection(
    geometry: HandGeometry,
    samples: int = 250_000,
    seed: int = 0,
    radius_mm: float = CONTACT_RADIUS_MM,
) -> dict[str, np.ndarray]:
    """Thumb-tip contact clouds against each finger.

    Draws joint configurations uniformly inside the joint-limit box for
    the thumb and each finger (paired row-wise) and keeps the thumb-tip
    positions where the two fingertips come within the contact radius.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    thumb = geometry.chain("thumb")
    thumb_angles = rng.uniform(0.0, 1.0, size=(samples, 3)) * thumb.limits
    thumb_tips = chain_tips_batch(thumb, thumb_angles)
    clouds = {}
    for finger in FINGERS[1:]:
        chain = geometry.chain(finger)
        angles = rng.uniform(0.0, 1.0, size=(samples, 3)) * chain.limits
        tips = chain_tips_batch(chain, angles)
        dist = np.sqrt(((thumb_tips - tips) ** 2).sum(axis=1))
        clouds[f"thumb-{finger}"] = thumb_tips[dist <= radius_mm]
    return clouds


def range_of_motion_report(
    config: PlantConfig,
    geometry: HandGeometry,
    calibration: CalibrationResult,
    sweep_points: int = 96,
) -> dict:
    """Per-joint travel achieved by sweeping each motor over its
    calibrated range, compared against the configured joint limits."""
    if calibration.plant_digest != plant_digest(config):
        raise DigestMismatchError("calibration was made for a different plant")
    limits = geometry.joint_limits()
    lo = np.full(15, np.inf)
    hi = np.full(15, -np.inf)
    for m in range(N_MOTORS):
        commands = np.repeat(calibration.motor_min[None, :], sweep_points, axis=0)
        commands[:, m] = np.linspace(
            calibration.motor_min[m], calibration.motor_max[m], sweep_points
        )
        joints = actuate_batch(config, geometry, commands)
        lo = np.minimum(lo, joints.min(axis=0))
        hi = np.maximum(hi, joints.max(axis=0))
    from .layout import JOINT_NAMES

    rows = {}
    for j, name in enumerate(JOINT_NAMES):
        rows[name] = {
            "achieved_min": float(lo[j]),
            "achieved_max": float(hi[j]),
            "limit": float(limits[j]),
            "coverage": float((hi[j] - lo[j]) / limits[j]),
        }
    return {
        "schema": configio.SCHEMA_VERSION,
        "kind": "range_of_motion",
        "joints": rows,
        "plant_digest": plant_digest(config),
        "calibration_digest": calibration.digest(),
    }


def transfer_report(
    checkpoints: dict,
    calib_a: CalibrationResult,
    plant_a: PlantConfig,
    calib_b: CalibrationResult,
    plant_b: PlantConfig,
    geometry: HandGeometry,
    vset: ValidationSet,
) -> dict:
    """Fingertip discrepancy when the same checkpoints drive two builds.

    Each build uses its own calibrated motor box; the targets are
    replayed on both and the achieved fingertips compared directly.
    """
    if calib_a.plant_digest != plant_digest(plant_a):
        raise DigestMismatchError("first plant does not match its calibration")
    if calib_b.plant_digest != plant_digest(plant_b):
        raise DigestMismatchError("second plant does not match its calibration")
    tips = []
    for calib, plant in ((calib_a, plant_a), (calib_b, plant_b)):
        controller = HandController(checkpoints, calib)
        controller.reset()
        commands = np.zeros((vset.frames.shape[0], N_MOTORS))
        states = {finger: vset.finger_states(finger) for finger in FINGERS}
        for step in range(commands.shape[0]):
            commands[step] = controller.step({f: states[f][step] for f in FINGERS})
        joints = actuate_batch(plant, geometry, commands)
        tips.append(forward_kinematics_batch(geometry, joints)[:, :, -1, :])
    diff_mm = np.abs(tips[0] - tips[1])
    return {
        "schema": configio.SCHEMA_VERSION,
        "kind": "transfer_report",
        "per_axis_mm": diff_mm.mean(axis=(0, 1)),
        "per_finger_mm": {
            finger: diff_mm[:, i, :].mean(axis=0) for i, finger in enumerate(FINGERS)
        },
        "mean_mm": float(diff_mm.mean()),
        "steps": int(vset.frames.shape[0]),
        "plant_a": plant_digest(plant_a),
        "plant_b": plant_digest(plant_b),
    }


# --- report serialization ------------------------------------------------------


def report_to_doc(report: EvalReport) -> dict:
    return {
        "schema": configio.SCHEMA_VERSION,
        "kind": "eval_report",
        "controller": report.controller,
        "set_kind": report.set_kind,
        "steps": report.steps,
        "per_finger_cm": {f: v for f, v in report.per_finger_cm.items()},
        "overall_cm": report.overall_cm,
        "digests": report.digests,
    }


def report_from_doc(doc: dict) -> EvalReport:
    configio.check_schema(doc, "eval_report")
    return EvalReport(
        controller=doc["controller"],
        set_kind=doc["set_kind"],
        steps=int(doc["steps"]),
        per_finger_cm={f: np.asarray(v, dtype=float) for f, v in doc["per_finger_cm"].items()},
        overall_cm=np.asarray(doc["overall_cm"], dtype=float),
        digests=dict(doc["digests"]),
    )


def format_report(report: EvalReport) -> str:
    lines = [
        f"controller={report.controller} set={report.set_kind} steps={report.steps}",
        f"{'finger':<8} {'x cm':>8} {'y cm':>8} {'z cm':>8}",
    ]
    for finger in FINGERS:
        x, y, z = report.per_finger_cm[finger]
        lines.append(f"{finger:<8} {x:>8.3f} {y:>8.3f} {z:>8.3f}")
    x, y, z = report.overall_cm
    lines.append(f"{'overall':<8} {x:>8.3f} {y:>8.3f} {z:>8.3f}")
    return "\n".join(lines)


def write_reports_jsonl(path, reports: list[EvalReport]) -> None:
    lines = [
        configio.canonical_json(configio.jsonable(report_to_doc(r))) for r in reports
    ]
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")


def read_reports_jsonl(path) -> list[EvalReport]:
    import json

    reports = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                reports.append(report_from_doc(json.loads(line)))
    return reports


def export_cloud_csv(path, clouds: dict[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("pair,x_mm,y_mm,z_mm\n")
        for pair in FINGER_PAIRS:
            for row in clouds.get(pair, np.zeros((0, 3))):
                fh.write(f"{pair},{row[0]!r},{row[1]!r},{row[2]!r}\n")
