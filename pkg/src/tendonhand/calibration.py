"""Per-motor range calibration against noisy joint readings.

Each motor is calibrated in isolation with every other motor parked at
its hardware minimum. A probe is the mean of ``readings_per_probe``
noisy joint measurements at a fixed command. Two binary searches per
motor bracket the useful range:

* motor_max: smallest command whose driven joints sit within
  ``tolerance`` degrees of their values at the hardware maximum
  (everything above it is wasted travel against the joint stops)
* motor_min: smallest command that moves any driven joint more than
  ``tolerance`` degrees away from the all-parked reference (slack and
  tension-offset travel below it does nothing)

Each search halves the interval until it is no wider than
``tolerance``, so it runs at most ceil(log2(range / tolerance)) + 1
iterations. Near-threshold comparisons are resolved by drawing more
readings until the margin is statistically decisive, which keeps the
found endpoints repeatable across noise seeds without extra
iterations.

A coarse sweep guards the monotonicity assumption the binary searches
rely on: if any driven joint retreats as its command grows, the motor
is reported broken instead of silently mis-ranged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import configio
from .errors import CalibrationError
from .geometry import HandGeometry
from .layout import MOTOR_JOINTS, MOTOR_NAMES, N_MOTORS
from .plant import PlantConfig, plant_digest, sample_noisy_joints

# Escalation cap for near-threshold comparisons. 256 base readings give
# roughly 0.05 deg of standard error; 64x more brings it under 0.01.
MAX_PROBE_READINGS = 16384
SWEEP_POINTS = 12


@dataclass(eq=False)
class CalibrationResult:
    motor_min: np.ndarray  # (11,)
    motor_max: np.ndarray  # (11,)
    tolerance: float
    readings_per_probe: int
    iterations: np.ndarray  # (11, 2) ints: lower search, upper search
    residual_motion: np.ndarray  # (11,) max off-chain deviation seen in sweep
    seed: int
    plant_digest: str
    timestamp_ms: int = 0

    def digest(self) -> str:
        return configio.digest(calibration_to_doc(self))


def calibration_to_doc(result: CalibrationResult) -> dict:
    return {
        "schema": configio.SCHEMA_VERSION,
        "kind": "calibration",
        "motor_min": result.motor_min,
        "motor_max": result.motor_max,
        "tolerance": result.tolerance,
        "readings_per_probe": result.readings_per_probe,
        "iterations": result.iterations,
        "residual_motion": result.residual_motion,
        "seed": result.seed,
        "plant_digest": result.plant_digest,
        "timestamp_ms": result.timestamp_ms,
    }


def calibration_from_doc(doc: dict) -> CalibrationResult:
    configio.check_schema(doc, "calibration")
    return CalibrationResult(
        motor_min=np.asarray(doc["motor_min"], dtype=float),
        motor_max=np.asarray(doc["motor_max"], dtype=float),
        tolerance=float(doc["tolerance"]),
        readings_per_probe=int(doc["readings_per_probe"]),
        iterations=np.asarray(doc["iterations"], dtype=int),
        residual_motion=np.asarray(doc["residual_motion"], dtype=float),
        seed=int(doc["seed"]),
        plant_digest=doc["plant_digest"],
        timestamp_ms=int(doc["timestamp_ms"]),
    )


def write_calibration(path, result: CalibrationResult) -> None:
    configio.write_json_doc(path, calibration_to_doc(result))


def read_calibration(path) -> CalibrationResult:
    return calibration_from_doc(configio.read_json_doc(path, "calibration"))


def _driven_joints(motor: int) -> list[int]:
    joints = MOTOR_JOINTS[motor]
    return list(joints) if isinstance(joints, tuple) else [joints]


class _Prober:
    """Mean joint readings with adaptive re-sampling near a threshold."""

    def __init__(self, probe, rng, base_readings: int):
        self.probe = probe
        self.rng = rng
        self.base = base_readings

    def mean(self, command: np.ndarray, readings: int | None = None) -> np.ndarray:
        return self.probe(command, self.rng, readings or self.base).mean(axis=0)

    def exceeds(self, command, joints_idx, reference, threshold: float) -> bool:
        """Does any listed joint deviate from the reference by > threshold?

        Draws extra readings when the measured margin is within a few
        standard errors of the threshold, so the answer tracks the true
        mean rather than one noise realization.
        """
        n = self.base
        draws = self.probe(command, self.rng, n)[:, joints_idx]
        while True:
            dev = np.abs(draws.mean(axis=0) - reference)
            worst = int(np.argmax(dev))
            se = draws[:, worst].std() / np.sqrt(draws.shape[0]) + 1e-12
            if abs(dev[worst] - threshold) > 4.0 * se or draws.shape[0] >= MAX_PROBE_READINGS:
                return bool(dev[worst] > threshold)
            more = self.probe(command, self.rng, draws.shape[0])[:, joints_idx]
            draws = np.concatenate([draws, more])


def _binary_search(lo, hi, predicate, tolerance):
    """Smallest command (to within tolerance) where predicate turns true.

    Assumes predicate(lo) is false and predicate(hi) is true.
    """
    iterations = 0
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            hi = mid
        else:
            lo = mid
        iterations += 1
    return hi, iterations


def calibrate(
    config: PlantConfig,
    geometry: HandGeometry,
    *,
    tolerance: float = 0.5,
    readings_per_probe: int = 256,
    seed: int = 0,
    probe=None,
    timestamp_ms: int = 0,
) -> CalibrationResult:
    """Find each motor's useful command range on this build.

    ``probe(command, rng, n) -> (n, 15)`` supplies raw noisy joint
    readings; the default reads the plant itself. The search budget per
    motor is bounded: each endpoint takes at most
    ceil(log2(range / tolerance)) + 1 interval halvings.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if probe is None:
        def probe(command, rng, n):
            return sample_noisy_joints(config, geometry, command, rng, n)

    rng = np.random.default_rng(seed)
    prober = _Prober(probe, rng, readings_per_probe)
    parked = config.motor_min.copy()
    ref_parked = prober.mean(parked, min(16 * readings_per_probe, MAX_PROBE_READINGS))

    motor_min = np.zeros(N_MOTORS)
    motor_max = np.zeros(N_MOTORS)
    iterations = np.zeros((N_MOTORS, 2), dtype=int)
    residual = np.zeros(N_MOTORS)
    max_iters = int(np.ceil(np.log2(
        (config.motor_max - config.motor_min).max() / tolerance
    ))) + 1

    for m in range(N_MOTORS):
        driven = _driven_joints(m)
        others = [j for j in range(ref_parked.size) if j not in driven]
        hw_lo = float(config.motor_min[m])
        hw_hi = float(config.motor_max[m])

        def at(value: float) -> np.ndarray:
            cmd = parked.copy()
            cmd[m] = value
            return cmd

        _check_monotone(prober, at, m, driven, hw_lo, hw_hi, tolerance)

        if not prober.exceeds(at(hw_hi), driven, ref_parked[driven], tolerance):
            raise CalibrationError(
                f"motor {MOTOR_NAMES[m]} produces no joint motion over its full range"
            )

        lower, it_lo = _binary_search(
            hw_lo,
            hw_hi,
            lambda v: prober.exceeds(at(v), driven, ref_parked[driven], tolerance),
            tolerance,
        )
        ref_full = prober.mean(at(hw_hi), min(16 * readings_per_probe, MAX_PROBE_READINGS))
        upper, it_hi = _binary_search(
            hw_lo,
            hw_hi,
            lambda v: not prober.exceeds(at(v), driven, ref_full[driven], tolerance),
            tolerance,
        )
        if it_lo > max_iters or it_hi > max_iters:
            raise CalibrationError(
                f"binary search exceeded {max_iters} iterations on {MOTOR_NAMES[m]}"
            )
        if not lower < upper:
            raise CalibrationError(
                f"degenerate range for {MOTOR_NAMES[m]}: [{lower}, {upper}]"
            )
        motor_min[m] = lower
        motor_max[m] = upper
        iterations[m] = (it_lo, it_hi)
        sweep = np.linspace(hw_lo, hw_hi, SWEEP_POINTS)
        off_chain = [
            np.abs(prober.mean(at(v), readings_per_probe)[others] - ref_parked[others]).max()
            for v in sweep[:: SWEEP_POINTS // 3]
        ]
        residual[m] = max(off_chain)

    return CalibrationResult(
        motor_min=motor_min,
        motor_max=motor_max,
        tolerance=tolerance,
        readings_per_probe=readings_per_probe,
        iterations=iterations,
        residual_motion=residual,
        seed=seed,
        plant_digest=plant_digest(config),
        timestamp_ms=timestamp_ms,
    )


def _check_monotone(prober, at, motor, driven, hw_lo, hw_hi, tolerance):
    """Driven joints must never retreat as the command grows.

    A retreat only counts when it clears the pair's sampling error,
    otherwise a small probe budget would flag noise as a fault.
    """
    sweep = np.linspace(hw_lo, hw_hi, SWEEP_POINTS)
    means, errs = [], []
    for v in sweep:
        draws = prober.probe(at(v), prober.rng, prober.base)[:, driven]
        means.append(draws.mean(axis=0))
        errs.append(draws.std(axis=0) / np.sqrt(draws.shape[0]))
    means, errs = np.stack(means), np.stack(errs)
    drops = means[:-1] - means[1:]
    slack = tolerance + 6.0 * np.hypot(errs[:-1], errs[1:])
    if (drops - slack).max() > 0.0:
        step = int(np.unravel_index(np.argmax(drops - slack), drops.shape)[0])
        raise CalibrationError(
            f"motor {MOTOR_NAMES[motor]} is not monotone: joint retreats "
            f"{drops[step].max():.3f} deg between commands {sweep[step]:.1f} and "
            f"{sweep[step + 1]:.1f}"
        )
