"""Synthetic tendon-driven plant.

Quasi-static stand-in for the physical hand. Each motor winds a tendon:
command degrees above a per-motor tension offset plus slack deadband
produce excursion (spool radius times the effective angle), and each
joint flexes by excursion over its pulley radius until it saturates at
its angle limit. The four non-thumb fingers curl PIP and DIP from one
motor, splitting excursion by a fixed coupling ratio; when one joint of
the pair saturates the remainder can spill to the other. Extension is
spring-return: zero excursion means zero flexion.

Sensor readings mimic a keypoint glove: forward kinematics of the true
joints plus i.i.d. Gaussian noise on every keypoint coordinate, with
joint angles re-derived from the noisy keypoints. The noise stream is a
pure function of (plant seed, timestamp), so identical queries repeat
exactly while distinct timestamps draw independently.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import configio
from .errors import ActuationLimitError
from .geometry import (
    HandGeometry,
    forward_kinematics,
    joint_angles_batch,
    joint_angles_from_keypoints,
)
from .layout import MOTOR_JOINTS, MOTOR_NAMES, N_JOINTS, N_MOTORS

MAX_PERTURB_MAGNITUDE = 0.5


@dataclass(frozen=True, eq=False)
class PlantConfig:
    spool_radius: np.ndarray  # (11,) mm, motor winding radius
    pulley_radius: np.ndarray  # (15,) mm, joint pulley radius
    tension_offset: np.ndarray  # (11,) deg of motor travel eaten by tensioning
    slack_deadband: np.ndarray  # (11,) deg of slack before the tendon engages
    motor_min: np.ndarray  # (11,) deg, hardware bound
    motor_max: np.ndarray  # (11,) deg, hardware bound
    coupling_ratio: float = 1.0  # PIP excursion : DIP excursion
    spill_on_saturation: bool = True
    keypoint_noise_std: float = 0.3  # mm
    seed: int = 0


@dataclass(frozen=True, eq=False)
class SensorReading:
    t_ms: float
    commanded: np.ndarray  # (11,) deg
    actual: np.ndarray  # (11,) deg, clamped to hardware bounds
    keypoints: np.ndarray  # (5, 5, 3) mm, noisy
    fingertips: np.ndarray  # (5, 3) mm, last keypoint per finger
    joints: np.ndarray  # (15,) deg, derived from the noisy keypoints


def default_plant(seed: int = 0) -> PlantConfig:
    return PlantConfig(
        spool_radius=np.full(N_MOTORS, 10.0),
        pulley_radius=np.full(N_JOINTS, 10.0),
        tension_offset=np.array([5.0, 4.0, 6.0, 5.5, 4.5, 5.0, 6.5, 4.0, 5.5, 6.0, 5.0]),
        slack_deadband=np.array([3.0, 3.5, 2.5, 3.0, 4.0, 3.5, 3.0, 4.5, 3.5, 3.0, 4.0]),
        motor_min=np.zeros(N_MOTORS),
        motor_max=np.full(N_MOTORS, 330.0),
        seed=seed,
    )


def check_motor_bounds(config: PlantConfig, command: np.ndarray) -> None:
    command = np.asarray(command, dtype=float)
    if command.shape != (N_MOTORS,):
        raise ActuationLimitError(f"expected {N_MOTORS} motor values, got shape {command.shape}")
    bad = np.where((command < config.motor_min) | (command > config.motor_max))[0]
    if bad.size:
        i = int(bad[0])
        raise ActuationLimitError(
            f"motor {MOTOR_NAMES[i]} command {command[i]:.6g} outside "
            f"[{config.motor_min[i]:.6g}, {config.motor_max[i]:.6g}]"
        )


def actuate(config: PlantConfig, geometry: HandGeometry, command: np.ndarray) -> np.ndarray:
    """True joint angles (15,) produced by a motor command (11,)."""
    check_motor_bounds(config, command)
    return actuate_batch(config, geometry, np.asarray(command, dtype=float)[None])[0]


def actuate_batch(
    config: PlantConfig, geometry: HandGeometry, commands: np.ndarray
) -> np.ndarray:
    """Vectorized ``actuate`` over (N, 11) pre-validated commands."""
    commands = np.asarray(commands, dtype=float)
    limits = geometry.joint_limits()
    excursion = (
        np.maximum(0.0, commands - config.tension_offset - config.slack_deadband)
        * config.spool_radius
    )  # (N, 11) deg*mm
    joints = np.zeros((commands.shape[0], N_JOINTS))
    ratio = config.coupling_ratio
    for m, driven in enumerate(MOTOR_JOINTS):
        e = excursion[:, m]
        if len(driven) == 1:
            j = driven[0]
            joints[:, j] = np.minimum(limits[j], e / config.pulley_radius[j])
        else:
            jp, jd = driven
            cap_p = limits[jp] * config.pulley_radius[jp]
            cap_d = limits[jd] * config.pulley_radius[jd]
            e_p = e * (ratio / (1.0 + ratio))
            e_d = e * (1.0 / (1.0 + ratio))
            if config.spill_on_saturation:
                spill_p = np.maximum(0.0, e_d - cap_d)
                spill_d = np.maximum(0.0, e_p - cap_p)
                e_p = e_p + spill_p
                e_d = e_d + spill_d
            joints[:, jp] = np.minimum(cap_p, e_p) / config.pulley_radius[jp]
            joints[:, jd] = np.minimum(cap_d, e_d) / config.pulley_radius[jd]
    return joints


def _noise_rng(seed: int, t_ms: float) -> np.random.Generator:
    t_bits = int(np.frombuffer(np.float64(t_ms).tobytes(), dtype=np.uint64)[0])
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), t_bits)))


def read_sensors(
    config: PlantConfig, geometry: HandGeometry, command: np.ndarray, t_ms: float
) -> SensorReading:
    """One glove-style reading of the pose held under ``command`` at ``t_ms``."""
    command = np.asarray(command, dtype=float)
    joints = actuate(config, geometry, command)
    frame = forward_kinematics(geometry, joints)
    if config.keypoint_noise_std > 0.0:
        rng = _noise_rng(config.seed, t_ms)
        frame = frame + rng.normal(0.0, config.keypoint_noise_std, size=frame.shape)
    return SensorReading(
        t_ms=float(t_ms),
        commanded=command.copy(),
        actual=np.clip(command, config.motor_min, config.motor_max),
        keypoints=frame,
        fingertips=frame[:, -1, :].copy(),
        joints=joint_angles_from_keypoints(frame),
    )


def sample_noisy_joints(
    config: PlantConfig,
    geometry: HandGeometry,
    command: np.ndarray,
    rng: np.random.Generator,
    n: int,
) -> np.ndarray:
    """(n, 15) joint measurements for calibration probes at one pose.

    Each row is the plant's joint vector plus the jitter that keypoint
    noise induces on angle extraction at this pose. Reporting around
    the true joints rather than re-extracting keeps the channel
    monotone in the command even where an interior angle passes 180
    deg and keypoint extraction would fold back; the calibration
    search requires that monotonicity.

    Uses the caller's generator, so repeat measurements inside one
    calibration run draw fresh noise while the run itself stays seeded.
    """
    joints = actuate(config, geometry, command)
    frame = forward_kinematics(geometry, joints)
    if config.keypoint_noise_std == 0.0:
        return np.repeat(joints[None], n, axis=0)
    frames = frame[None] + rng.normal(0.0, config.keypoint_noise_std, size=(n, *frame.shape))
    jitter = joint_angles_batch(frames) - joint_angles_from_keypoints(frame)
    return joints[None] + jitter


def perturb_build(config: PlantConfig, magnitude: float, seed: int) -> PlantConfig:
    """A new build of the same design: tendon routing varies, geometry does not.

    Tension offsets, slack deadbands, and spool radii each pick up an
    independent relative jitter uniform in [-magnitude, +magnitude].
    Pulley radii and the coupling ratio are printed geometry, identical
    across builds.
    """
    if not 0.0 <= magnitude <= MAX_PERTURB_MAGNITUDE:
        raise ValueError(
            f"perturbation magnitude {magnitude} outside [0, {MAX_PERTURB_MAGNITUDE}]"
        )
    rng = np.random.default_rng(seed)
    jitter = lambda arr: arr * (1.0 + rng.uniform(-magnitude, magnitude, size=arr.shape))
    return replace(
        config,
        tension_offset=jitter(config.tension_offset),
        slack_deadband=jitter(config.slack_deadband),
        spool_radius=jitter(config.spool_radius),
    )


# --- config document round trip ---------------------------------------------


def plant_to_doc(config: PlantConfig) -> dict:
    return {
        "schema": configio.SCHEMA_VERSION,
        "kind": "plant",
        "units": {"length": "mm", "angle": "deg"},
        "spool_radius": config.spool_radius.tolist(),
        "pulley_radius": config.pulley_radius.tolist(),
        "tension_offset": config.tension_offset.tolist(),
        "slack_deadband": config.slack_deadband.tolist(),
        "motor_min": config.motor_min.tolist(),
        "motor_max": config.motor_max.tolist(),
        "coupling_ratio": float(config.coupling_ratio),
        "spill_on_saturation": bool(config.spill_on_saturation),
        "keypoint_noise_std": float(config.keypoint_noise_std),
        "seed": int(config.seed),
    }


def plant_from_doc(doc: dict) -> PlantConfig:
    configio.check_schema(doc, "plant")
    return PlantConfig(
        spool_radius=np.asarray(doc["spool_radius"], dtype=float),
        pulley_radius=np.asarray(doc["pulley_radius"], dtype=float),
        tension_offset=np.asarray(doc["tension_offset"], dtype=float),
        slack_deadband=np.asarray(doc["slack_deadband"], dtype=float),
        motor_min=np.asarray(doc["motor_min"], dtype=float),
        motor_max=np.asarray(doc["motor_max"], dtype=float),
        coupling_ratio=float(doc["coupling_ratio"]),
        spill_on_saturation=bool(doc["spill_on_saturation"]),
        keypoint_noise_std=float(doc["keypoint_noise_std"]),
        seed=int(doc["seed"]),
    )


def plant_digest(config: PlantConfig) -> str:
    return configio.digest(plant_to_doc(config))
