"""Command-line pipeline glue.

Each command reads and writes one run directory. Stages chain through
content digests: collection records the calibration it used, training
records the datasets, evaluation checks the whole chain before scoring.
Running a stage twice with the same inputs rewrites byte-identical
artifacts; nothing in an artifact depends on the wall clock.
"""

from __future__ import annotations

import dataclasses
import functools
from pathlib import Path

import click
import numpy as np

from . import configio
from .calibration import calibrate, read_calibration, write_calibration
from .controllers import (
    CONTROLLER_KINDS,
    DEFAULT_TRAINING,
    TrainingConfig,
    load_manifest,
    save_checkpoint,
    save_manifest,
    train,
    training_config_from_doc,
    training_config_to_doc,
)
from .datagen import collect_dataset, dataset_digest, read_dataset, write_dataset
from .errors import (
    CalibrationError,
    DatasetFormatError,
    DigestMismatchError,
    DigestMissingError,
    TimestampOrderError,
    TrainingDivergenceError,
)
from .evaluation import (
    format_report,
    make_humanlike_validation,
    make_robot_validation,
    range_of_motion_report,
    replay_and_score,
    report_to_doc,
    write_reports_jsonl,
)
from .geometry import default_geometry, geometry_digest, geometry_from_doc, geometry_to_doc
from .layout import FINGERS
from .plant import default_plant, plant_digest, plant_from_doc, plant_to_doc
from .service import (
    CONTROLLER_RATE_HZ,
    DIRECT_RATE_HZ,
    ControlSession,
    read_recording,
    replay_frames,
    serve as run_server,
    validation_recording,
    write_recording,
)

_ERRORS = (
    CalibrationError,
    DatasetFormatError,
    DigestMismatchError,
    DigestMissingError,
    TimestampOrderError,
    TrainingDivergenceError,
    ValueError,
    FileNotFoundError,
)


def _surface_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _ERRORS as err:
            raise click.ClickException(f"{type(err).__name__}: {err}")

    return wrapper


class Workbench:
    """Resolved configs plus run-directory bookkeeping for one command."""

    def __init__(self, run_dir: Path, seed: int, config_dir: Path | None):
        self.run_dir = run_dir
        self.seed = seed
        self.config_dir = config_dir

    def _maybe(self, name: str):
        """Resolution order: explicit --config dir, then the build the run
        itself was calibrated with, then library defaults."""
        if self.config_dir is not None and (self.config_dir / name).exists():
            return self.config_dir / name
        if (self.run_dir / name).exists():
            return self.run_dir / name
        return None

    @functools.cached_property
    def geometry(self):
        path = self._maybe("geometry.yaml")
        if path is None:
            return default_geometry()
        return geometry_from_doc(configio.read_config_doc(path, "geometry"))

    @functools.cached_property
    def plant(self):
        path = self._maybe("plant.yaml")
        if path is None:
            return default_plant(self.seed)
        return plant_from_doc(configio.read_config_doc(path, "plant"))

    @functools.cached_property
    def training_override(self) -> TrainingConfig | None:
        path = self._maybe("training.yaml")
        if path is None:
            return None
        cfg = training_config_from_doc(configio.read_config_doc(path, "training"))
        return dataclasses.replace(cfg, seed=self.seed)

    def training_for(self, kind: str) -> TrainingConfig:
        cfg = self.training_override
        if cfg is None:
            cfg = dataclasses.replace(DEFAULT_TRAINING[kind], seed=self.seed)
        return cfg

    # --- run manifest --------------------------------------------------------

    @property
    def manifest_path(self) -> Path:
        return self.run_dir / "manifest.json"

    def read_manifest(self) -> dict:
        if not self.manifest_path.exists():
            return {
                "schema": configio.SCHEMA_VERSION,
                "kind": "run_manifest",
                "seed": self.seed,
                "stages": {},
            }
        return configio.read_json_doc(self.manifest_path, "run_manifest")

    def record_stage(self, name: str, entry: dict) -> None:
        doc = self.read_manifest()
        doc["stages"][name] = entry
        self.run_dir.mkdir(parents=True, exist_ok=True)
        configio.write_json_doc(self.manifest_path, doc)

    def stage(self, name: str) -> dict:
        stages = self.read_manifest()["stages"]
        if name not in stages:
            raise DigestMissingError(
                f"run has no `{name}` stage yet; run `tendonhand {name}` first"
            )
        return stages[name]

    # --- stage artifacts -----------------------------------------------------

    def calibration(self):
        path = self.run_dir / "calibration.json"
        if not path.exists():
            raise DigestMissingError(
                "no calibration in this run; run `tendonhand calibrate` first"
            )
        result = read_calibration(path)
        if result.plant_digest != plant_digest(self.plant):
            raise DigestMismatchError(
                "calibration.json was made for a different plant config"
            )
        return result

    def dataset(self, finger: str):
        path = self.run_dir / "data" / f"{finger}.jsonl"
        if not path.exists():
            raise DigestMissingError(
                f"no dataset for {finger}; run `tendonhand gen-data` first"
            )
        return read_dataset(path)

    def controller(self, kind: str, calibration):
        path = self.run_dir / "controllers" / f"manifest_{kind}.json"
        if not path.exists():
            raise DigestMissingError(
                f"no trained {kind} controller; run `tendonhand train` first"
            )
        return load_manifest(path, calibration)

    def trained_kinds(self) -> list[str]:
        root = self.run_dir / "controllers"
        if not root.exists():
            return []
        return sorted(p.stem.removeprefix("manifest_") for p in root.glob("manifest_*.json"))


pass_workbench = click.make_pass_decorator(Workbench)


@click.group()
@click.option("--run-dir", default="runs/default", show_default=True,
              type=click.Path(path_type=Path), help="Directory all artifacts go to.")
@click.option("--seed", default=0, show_default=True, type=int,
              help="Root seed; every stage derives its own streams from it.")
@click.option("--config", "config_dir", default=None,
              type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="Directory with geometry.yaml / plant.yaml / training.yaml overrides.")
@click.pass_context
def main(ctx, run_dir: Path, seed: int, config_dir: Path | None):
    """Tendon-driven hand workbench: simulate, calibrate, learn, serve."""
    ctx.obj = Workbench(run_dir=run_dir, seed=seed, config_dir=config_dir)


@main.command(name="calibrate")
@click.option("--tolerance", default=0.5, show_default=True, help="Endpoint tolerance, deg.")
@click.option("--readings", default=256, show_default=True,
              help="Baseline sensor readings averaged per probe.")
@pass_workbench
@_surface_errors
def calibrate_cmd(wb: Workbench, tolerance: float, readings: int):
    """Find per-motor travel endpoints on the current build."""
    result = calibrate(
        wb.plant,
        wb.geometry,
        tolerance=tolerance,
        readings_per_probe=readings,
        seed=wb.seed,
    )
    wb.run_dir.mkdir(parents=True, exist_ok=True)
    write_calibration(wb.run_dir / "calibration.json", result)
    configio.write_config_doc(wb.run_dir / "geometry.yaml", geometry_to_doc(wb.geometry))
    configio.write_config_doc(wb.run_dir / "plant.yaml", plant_to_doc(wb.plant))
    wb.record_stage(
        "calibrate",
        {
            "path": "calibration.json",
            "digest": result.digest(),
            "plant_digest": plant_digest(wb.plant),
            "geometry_digest": geometry_digest(wb.geometry),
            "tolerance": tolerance,
        },
    )
    span = result.motor_max - result.motor_min
    click.echo(f"calibrated 11 motors, tolerance {tolerance} deg")
    click.echo(f"travel spans {span.min():.1f}..{span.max():.1f} deg, "
               f"digest {result.digest()[:12]}")


@main.command(name="gen-data")
@click.option("--episodes", default=0, show_default="per-finger defaults",
              help="Episodes per finger (0 keeps the per-finger defaults).")
@click.option("--steps", default=100, show_default=True, help="Steps per episode.")
@pass_workbench
@_surface_errors
def gen_data(wb: Workbench, episodes: int, steps: int):
    """Collect per-finger random-walk datasets inside the calibrated box."""
    calibration = wb.calibration()
    data_dir = wb.run_dir / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    entry: dict = {"datasets": {}, "calibration_digest": calibration.digest()}
    for i, finger in enumerate(FINGERS):
        dataset = collect_dataset(
            wb.plant,
            wb.geometry,
            finger,
            episodes=episodes or None,
            steps=steps,
            seed=wb.seed * 100 + i,
            motor_lo=calibration.motor_min,
            motor_hi=calibration.motor_max,
            calibration_digest=calibration.digest(),
        )
        path = data_dir / f"{finger}.jsonl"
        write_dataset(dataset, path)
        entry["datasets"][finger] = {
            "path": f"data/{finger}.jsonl",
            "digest": dataset_digest(dataset),
            "samples": len(dataset.samples),
        }
        click.echo(f"{finger}: {dataset.episodes} episodes x {dataset.steps} steps "
                   f"-> {path}")
    wb.record_stage("gen-data", entry)


@main.command(name="train")
@click.option("--kind", "kinds", multiple=True,
              type=click.Choice(CONTROLLER_KINDS), help="Controller families to fit "
              "(repeatable; default all).")
@click.option("--epochs", default=0, help="Override training epochs (0 keeps config).")
@pass_workbench
@_surface_errors
def train_cmd(wb: Workbench, kinds: tuple[str, ...], epochs: int):
    """Fit controllers on the collected datasets."""
    calibration = wb.calibration()
    kinds = kinds or CONTROLLER_KINDS
    datasets = {}
    for finger in FINGERS:
        dataset = wb.dataset(finger)
        if dataset.calibration_digest != calibration.digest():
            raise DigestMismatchError(
                f"dataset for {finger} was collected under a different calibration; "
                "rerun `tendonhand gen-data`"
            )
        datasets[finger] = dataset
    out_root = wb.run_dir / "controllers"
    entry: dict = {"kinds": {}}
    for kind in kinds:
        cfg = wb.training_for(kind)
        if epochs:
            cfg = dataclasses.replace(cfg, epochs=epochs)
        kind_dir = out_root / kind
        kind_dir.mkdir(parents=True, exist_ok=True)
        paths = {}
        losses = {}
        for finger in FINGERS:
            ckpt = train(kind, datasets[finger], calibration, cfg)
            save_checkpoint(ckpt, kind_dir / f"{finger}.json")
            paths[finger] = f"{kind}/{finger}.json"
            losses[finger] = ckpt.metrics.get("holdout_mse", 0.0)
        manifest_path = out_root / f"manifest_{kind}.json"
        save_manifest(manifest_path, kind, paths, calibration.digest())
        entry["kinds"][kind] = {
            "manifest": f"controllers/manifest_{kind}.json",
            "training": training_config_to_doc(cfg),
        }
        worst = max(losses.values())
        click.echo(f"{kind}: trained 5 fingers, worst holdout mse {worst:.4f}")
    wb.record_stage("train", entry)


@main.command(name="evaluate")
@click.option("--robot-poses", default=600, show_default=True)
@click.option("--humanlike-poses", default=600, show_default=True)
@click.option("--kind", "kinds", multiple=True, type=click.Choice(CONTROLLER_KINDS),
              help="Controllers to score (default: every trained one).")
@pass_workbench
@_surface_errors
def evaluate_cmd(wb: Workbench, robot_poses: int, humanlike_poses: int,
                 kinds: tuple[str, ...]):
    """Score trained controllers on robot and human-like target sets."""
    calibration = wb.calibration()
    kinds = list(kinds) or wb.trained_kinds()
    if not kinds:
        raise DigestMissingError("no trained controllers; run `tendonhand train` first")
    robot = make_robot_validation(
        wb.plant, wb.geometry, robot_poses, seed=wb.seed + 7001,
        motor_lo=calibration.motor_min, motor_hi=calibration.motor_max,
    )
    humanlike = make_humanlike_validation(wb.geometry, humanlike_poses, seed=wb.seed + 7002)
    reports = []
    for kind in kinds:
        controller = wb.controller(kind, calibration)
        for vset in (robot, humanlike):
            report = replay_and_score(controller, wb.plant, wb.geometry, vset)
            reports.append(report)
            click.echo(format_report(report))
    write_reports_jsonl(wb.run_dir / "reports.jsonl", reports)
    rom = range_of_motion_report(wb.plant, wb.geometry, calibration)
    configio.write_json_doc(wb.run_dir / "rom.json", rom)
    write_recording(
        wb.run_dir / "validation_robot.jsonl",
        validation_recording(robot, period_ms=1e3 / CONTROLLER_RATE_HZ),
    )
    worst_cov = min(row["coverage"] for row in rom["joints"].values())
    click.echo(f"range of motion: worst joint coverage {worst_cov:.3f}")
    by_kind = {
        r.controller: r.mean_cm() for r in reports if r.set_kind == "humanlike"
    }
    order = sorted(by_kind, key=by_kind.get)
    click.echo("humanlike mean error (cm): "
               + ", ".join(f"{k}={by_kind[k]:.3f}" for k in order))
    wb.record_stage(
        "evaluate",
        {
            "reports": "reports.jsonl",
            "rom": "rom.json",
            "robot_recording": "validation_robot.jsonl",
            "kinds": kinds,
            "robot_seed": wb.seed + 7001,
            "humanlike_seed": wb.seed + 7002,
        },
    )


@main.command(name="serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True)
@click.option("--controller", "active", default=None,
              help="Initially active controller kind (default: first trained).")
@click.option("--rate", default=CONTROLLER_RATE_HZ, show_default=True,
              help="Closed-loop control rate, Hz.")
@click.option("--direct-rate", default=DIRECT_RATE_HZ, show_default=True,
              help="Direct motor-command rate, Hz.")
@click.option("--ui", "ui_dir", default=None,
              type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="Also serve a static control panel from this directory.")
@pass_workbench
@_surface_errors
def serve_cmd(wb: Workbench, host: str, port: int, active: str | None,
              rate: float, direct_rate: float, ui_dir: Path | None):
    """Run the teleoperation service on a trained run directory."""
    calibration = wb.calibration()
    controllers = {
        kind: wb.controller(kind, calibration) for kind in wb.trained_kinds()
    }
    if not controllers:
        raise DigestMissingError("no trained controllers; run `tendonhand train` first")
    session = ControlSession(
        wb.plant, wb.geometry, calibration, controllers,
        active=active, rate_hz=rate, direct_rate_hz=direct_rate,
    )
    click.echo(f"serving {sorted(controllers)} on http://{host}:{port}")
    run_server(session, host=host, port=port, ui_dir=ui_dir)


@main.command(name="replay")
@click.argument("recording", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--controller", "kind", default=None,
              help="Controller kind to drive (default: first trained).")
@pass_workbench
@_surface_errors
def replay_cmd(wb: Workbench, recording: Path, kind: str | None):
    """Replay a recorded frame stream and score the result."""
    calibration = wb.calibration()
    kind = kind or (wb.trained_kinds() or [None])[0]
    if kind is None:
        raise DigestMissingError("no trained controllers; run `tendonhand train` first")
    controller = wb.controller(kind, calibration)
    frames = read_recording(recording)
    report = replay_frames(frames, controller, wb.plant, wb.geometry)
    click.echo(format_report(report))
    out = wb.run_dir / f"replay_{kind}.json"
    configio.write_json_doc(out, report_to_doc(report))
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
