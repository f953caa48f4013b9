"""Random-walk data collection and the line-delimited dataset format.

Collection mirrors how the physical hand gathers training data: one
finger at a time, the rest slack. Each episode draws its first command
uniformly inside the finger's motor bounds, then takes 100 steps, every
motor independently moving up or down by one step size (clamped to the
bounds), logging a sensor reading per step at the 15 Hz logging period.

Files are UTF-8 lines: a header object followed by one sample object
per line. Floats are serialized with shortest round-trip repr, so a
re-read dataset is bit-identical; the header carries a body checksum,
the sample count, and the config digests that produced the data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import configio
from .errors import DatasetFormatError
from .geometry import HandGeometry, geometry_digest
from .layout import FINGER_MOTORS, LOG_PERIOD_MS, N_MOTORS
from .plant import PlantConfig, SensorReading, plant_digest, read_sensors

DEFAULT_EPISODES = {"thumb": 500, "index": 300, "middle": 300, "ring": 300, "pinky": 300}
DEFAULT_STEPS = 100
DEFAULT_STEP_SIZE = 2.0  # deg; 100 steps can traverse well past half a motor range


@dataclass(frozen=True)
class Sample:
    episode: int
    step: int
    t_ms: float
    reading: SensorReading


@dataclass(eq=False)
class Dataset:
    finger: str
    samples: list[Sample]
    seed: int
    episodes: int
    steps: int
    step_size: float
    plant_digest: str
    geometry_digest: str
    calibration_digest: str


def random_walk_commands(
    rng: np.random.Generator,
    lo: np.ndarray,
    hi: np.ndarray,
    steps: int,
    step_size: float,
) -> np.ndarray:
    """(steps, d) command walk: uniform start, then +/- one step per motor."""
    cmds = np.empty((steps, lo.size))
    cmds[0] = rng.uniform(lo, hi)
    for t in range(1, steps):
        sign = rng.choice(np.array([-1.0, 1.0]), size=lo.size)
        cmds[t] = np.clip(cmds[t - 1] + sign * step_size, lo, hi)
    return cmds


def random_walk_episode(
    config: PlantConfig,
    geometry: HandGeometry,
    finger: str,
    *,
    steps: int,
    step_size: float,
    seed: np.random.SeedSequence | int,
    episode: int,
    motor_lo: np.ndarray,
    motor_hi: np.ndarray,
) -> list[Sample]:
    """One episode of samples for ``finger``; other motors stay slack."""
    rng = np.random.default_rng(seed)
    idx = list(FINGER_MOTORS[finger])
    walk = random_walk_commands(rng, motor_lo[idx], motor_hi[idx], steps, step_size)
    base_t = episode * steps * LOG_PERIOD_MS
    samples = []
    for step in range(steps):
        command = config.motor_min.copy()
        command[idx] = walk[step]
        t_ms = base_t + step * LOG_PERIOD_MS
        reading = read_sensors(config, geometry, command, t_ms)
        samples.append(Sample(episode=episode, step=step, t_ms=t_ms, reading=reading))
    return samples


def collect_dataset(
    config: PlantConfig,
    geometry: HandGeometry,
    finger: str,
    *,
    episodes: int | None = None,
    steps: int = DEFAULT_STEPS,
    step_size: float = DEFAULT_STEP_SIZE,
    seed: int = 0,
    motor_lo: np.ndarray | None = None,
    motor_hi: np.ndarray | None = None,
    calibration_digest: str = "",
) -> Dataset:
    """Collect a per-finger dataset; bounds default to the hardware range."""
    if episodes is None:
        episodes = DEFAULT_EPISODES[finger]
    motor_lo = config.motor_min if motor_lo is None else np.asarray(motor_lo, dtype=float)
    motor_hi = config.motor_max if motor_hi is None else np.asarray(motor_hi, dtype=float)
    children = np.random.SeedSequence(seed).spawn(episodes)
    samples: list[Sample] = []
    for episode, child in enumerate(children):
        samples.extend(
            random_walk_episode(
                config,
                geometry,
                finger,
                steps=steps,
                step_size=step_size,
                seed=child,
                episode=episode,
                motor_lo=motor_lo,
                motor_hi=motor_hi,
            )
        )
    return Dataset(
        finger=finger,
        samples=samples,
        seed=seed,
        episodes=episodes,
        steps=steps,
        step_size=step_size,
        plant_digest=plant_digest(config),
        geometry_digest=geometry_digest(geometry),
        calibration_digest=calibration_digest,
    )


# --- serialization -----------------------------------------------------------


def _sample_line(sample: Sample) -> str:
    r = sample.reading
    record = {
        "episode": sample.episode,
        "step": sample.step,
        "t_ms": sample.t_ms,
        "commanded": r.commanded,
        "actual": r.actual,
        "keypoints": r.keypoints,
        "fingertips": r.fingertips,
        "joints": r.joints,
    }
    return json.dumps(configio.jsonable(record), sort_keys=True, separators=(",", ":"))


def _sample_from_record(record: dict) -> Sample:
    reading = SensorReading(
        t_ms=float(record["t_ms"]),
        commanded=np.asarray(record["commanded"], dtype=float),
        actual=np.asarray(record["actual"], dtype=float),
        keypoints=np.asarray(record["keypoints"], dtype=float),
        fingertips=np.asarray(record["fingertips"], dtype=float),
        joints=np.asarray(record["joints"], dtype=float),
    )
    return Sample(
        episode=int(record["episode"]),
        step=int(record["step"]),
        t_ms=float(record["t_ms"]),
        reading=reading,
    )


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    body = [_sample_line(s) for s in dataset.samples]
    header = {
        "schema": configio.SCHEMA_VERSION,
        "kind": "dataset",
        "finger": dataset.finger,
        "seed": dataset.seed,
        "episodes": dataset.episodes,
        "steps": dataset.steps,
        "step_size": dataset.step_size,
        "plant_digest": dataset.plant_digest,
        "geometry_digest": dataset.geometry_digest,
        "calibration_digest": dataset.calibration_digest,
        "count": len(body),
        "body_sha256": configio.sha256_lines(body),
    }
    lines = [json.dumps(configio.jsonable(header), sort_keys=True, separators=(",", ":"))]
    lines.extend(body)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dataset(path: str | Path) -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise DatasetFormatError(f"{path}: empty file")
    header = json.loads(lines[0])
    configio.check_schema(header, "dataset")
    body = lines[1:]
    if any(not line.strip() for line in body):
        raise DatasetFormatError(f"{path}: blank line inside body")
    if len(body) != header["count"]:
        raise DatasetFormatError(
            f"{path}: truncated, header promises {header['count']} samples, found {len(body)}"
        )
    if configio.sha256_lines(body) != header["body_sha256"]:
        raise DatasetFormatError(f"{path}: body checksum mismatch")
    samples = [_sample_from_record(json.loads(line)) for line in body]
    return Dataset(
        finger=header["finger"],
        samples=samples,
        seed=header["seed"],
        episodes=header["episodes"],
        steps=header["steps"],
        step_size=header["step_size"],
        plant_digest=header["plant_digest"],
        geometry_digest=header["geometry_digest"],
        calibration_digest=header["calibration_digest"],
    )


def dataset_digest(dataset: Dataset) -> str:
    body = [_sample_line(s) for s in dataset.samples]
    return configio.sha256_lines(body)
