"""Teleoperation service: a fixed-rate control loop plus HTTP/WS access.

One thread owns the plant and runs a fixed-rate loop against absolute
deadlines (wall-clock drift never accumulates). Targets arrive through
a single-slot latest-wins mailbox: the loop always executes the most
recent frame, never a stale backlog. State queries read an immutable
snapshot reference, so they never block the loop and are at most one
control period stale.

Two modes: "controller" routes per-finger targets through the active
trained controller at 25 Hz; "direct" applies raw motor commands at
40 Hz. Controller switches are applied between ticks, atomically.

Replay is the offline twin of the live loop: it executes a recorded
frame stream synchronously against the noiseless plant and scores it
exactly like the evaluation module, so a replayed robot-validation
recording reproduces those numbers bit for bit.
"""

from __future__ import annotations

import json
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from . import configio
from .calibration import CalibrationResult, calibrate, calibration_to_doc
from .controllers import HandController
from .errors import RepresentationMismatchError, TimestampOrderError
from .evaluation import EvalReport, ValidationSet, replay_and_score
from .geometry import HandGeometry, geometry_digest, geometry_to_doc
from .layout import FINGERS, LOG_PERIOD_MS, N_MOTORS
from .plant import PlantConfig, plant_digest, plant_to_doc, read_sensors

CONTROLLER_RATE_HZ = 25.0
DIRECT_RATE_HZ = 40.0
RING_SIZE = 256
SPIN_S = 0.002  # busy-wait tail so wakeups never overshoot the deadline


@dataclass(frozen=True)
class TeleopFrame:
    t_ms: float
    targets: dict[str, np.ndarray]  # finger -> (3,): thumb tip mm, else joint deg
    source: str = "ui"


@dataclass(frozen=True)
class MotorFrame:
    t_ms: float
    command: np.ndarray  # (11,) raw motor degrees


def teleop_frame_to_doc(frame: TeleopFrame) -> dict:
    return {
        "schema": configio.SCHEMA_VERSION,
        "kind": "teleop_frame",
        "t_ms": frame.t_ms,
        "targets": {f: frame.targets[f] for f in FINGERS},
        "source": frame.source,
    }


def parse_teleop_frame(doc: dict) -> TeleopFrame:
    """Validate an incoming frame document; raises ValueError with a
    human-readable reason on any malformation."""
    if not isinstance(doc, dict):
        raise ValueError("frame must be an object")
    if doc.get("kind") != "teleop_frame":
        raise ValueError(f"expected kind teleop_frame, got {doc.get('kind')!r}")
    if doc.get("schema") != configio.SCHEMA_VERSION:
        raise ValueError(f"unsupported schema {doc.get('schema')!r}")
    try:
        t_ms = float(doc["t_ms"])
    except (KeyError, TypeError, ValueError):
        raise ValueError("t_ms missing or not a number")
    if not np.isfinite(t_ms):
        raise ValueError("t_ms must be finite")
    raw = doc.get("targets")
    if not isinstance(raw, dict) or set(raw) != set(FINGERS):
        raise ValueError(f"targets must cover exactly {list(FINGERS)}")
    targets = {}
    for finger in FINGERS:
        arr = np.asarray(raw[finger], dtype=float)
        if arr.shape != (3,):
            raise ValueError(f"target for {finger} must have 3 values")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"target for {finger} contains non-finite values")
        targets[finger] = arr
    source = doc.get("source", "ui")
    if source not in ("ui", "replay-file"):
        raise ValueError(f"unknown source {source!r}")
    return TeleopFrame(t_ms=t_ms, targets=targets, source=source)


def parse_motor_frame(doc: dict, lo: np.ndarray, hi: np.ndarray) -> MotorFrame:
    if not isinstance(doc, dict) or doc.get("kind") != "motor_frame":
        raise ValueError("expected kind motor_frame")
    if doc.get("schema") != configio.SCHEMA_VERSION:
        raise ValueError(f"unsupported schema {doc.get('schema')!r}")
    try:
        t_ms = float(doc["t_ms"])
    except (KeyError, TypeError, ValueError):
        raise ValueError("t_ms missing or not a number")
    cmd = np.asarray(doc.get("command"), dtype=float)
    if cmd.shape != (N_MOTORS,):
        raise ValueError(f"command must have {N_MOTORS} values")
    if not np.all(np.isfinite(cmd)):
        raise ValueError("command contains non-finite values")
    if np.any(cmd < lo) or np.any(cmd > hi):
        raise ValueError("command outside hardware bounds")
    return MotorFrame(t_ms=t_ms, command=cmd)


def reading_to_doc(reading, tick: int) -> dict:
    return {
        "schema": configio.SCHEMA_VERSION,
        "kind": "sensor_reading",
        "tick": tick,
        "t_ms": reading.t_ms,
        "commanded": reading.commanded,
        "actual": reading.actual,
        "keypoints": reading.keypoints,
        "fingertips": reading.fingertips,
        "joints": reading.joints,
    }


class _Mailbox:
    """Single-slot, latest-wins."""

    def __init__(self):
        self._lock = threading.Lock()
        self._item = None

    def put(self, item) -> None:
        with self._lock:
            self._item = item

    def take(self):
        with self._lock:
            item, self._item = self._item, None
            return item


def _sleep_until(deadline: float) -> None:
    while True:
        remaining = deadline - time.perf_counter()
        if remaining <= 0.0:
            return
        if remaining > SPIN_S:
            time.sleep(remaining - SPIN_S)
        # spin out the tail: time.sleep alone can overshoot by a scheduler tick


@dataclass
class LoopStats:
    ticks: int = 0
    misses: int = 0
    lateness_ms: deque = field(default_factory=lambda: deque(maxlen=4096))
    window: deque = field(default_factory=lambda: deque(maxlen=4096))

    def record(self, lateness_s: float, now: float) -> None:
        self.ticks += 1
        if lateness_s > 0.0:
            self.misses += 1
        self.lateness_ms.append(lateness_s * 1e3)
        self.window.append(now)

    def snapshot(self) -> dict:
        lat = np.asarray(self.lateness_ms, dtype=float)
        now = time.perf_counter()
        recent = [t for t in self.window if now - t <= 1.0]
        rate = float(len(recent)) if len(self.window) >= 2 else 0.0
        return {
            "ticks": self.ticks,
            "misses": self.misses,
            "rate_hz": rate,
            "p99_lateness_ms": float(np.percentile(lat, 99)) if lat.size else 0.0,
            "max_lateness_ms": float(lat.max()) if lat.size else 0.0,
        }


class ControlSession:
    """Owns the plant; everything else talks to it through messages."""

    def __init__(
        self,
        config: PlantConfig,
        geometry: HandGeometry,
        calibration: CalibrationResult,
        controllers: dict[str, HandController],
        active: str | None = None,
        rate_hz: float = CONTROLLER_RATE_HZ,
        direct_rate_hz: float = DIRECT_RATE_HZ,
    ):
        if not controllers:
            raise ValueError("at least one controller manifest is required")
        self.config = config
        self.geometry = geometry
        self.calibration = calibration
        self.controllers = controllers
        self.active_kind = active or sorted(controllers)[0]
        if self.active_kind not in controllers:
            raise ValueError(f"no controller named {self.active_kind!r}")
        self.rate_hz = rate_hz
        self.direct_rate_hz = direct_rate_hz
        self.mode = "controller"
        self.mailbox = _Mailbox()
        self.stats = LoopStats()
        self.readings: deque = deque(maxlen=RING_SIZE)
        self._snapshot: dict | None = None
        self._pending_kind: str | None = None
        self._pending_mode: str | None = None
        self._calibrate_request: dict | None = None
        self._last_frame_ms: float = -np.inf
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._tick = 0
        self._logical_ms = 0.0
        self._command = config.motor_min.copy()
        self._lock = threading.Lock()  # guards submissions, not the loop

    # --- submission side (request handlers) ---------------------------------

    def submit_teleop(self, frame: TeleopFrame) -> None:
        with self._lock:
            if frame.t_ms <= self._last_frame_ms:
                raise TimestampOrderError(
                    f"frame timestamp {frame.t_ms} not after {self._last_frame_ms}"
                )
            self._last_frame_ms = frame.t_ms
        if self.mode != "controller":
            raise RepresentationMismatchError("session is in direct mode")
        self.mailbox.put(frame)

    def submit_motor(self, frame: MotorFrame) -> None:
        with self._lock:
            if frame.t_ms <= self._last_frame_ms:
                raise TimestampOrderError(
                    f"frame timestamp {frame.t_ms} not after {self._last_frame_ms}"
                )
            self._last_frame_ms = frame.t_ms
        if self.mode != "direct":
            raise RepresentationMismatchError("session is in controller mode")
        self.mailbox.put(frame)

    def switch_controller(self, kind: str) -> None:
        if kind not in self.controllers:
            raise ValueError(f"no controller named {kind!r}")
        self._pending_kind = kind

    def switch_mode(self, mode: str) -> None:
        if mode not in ("controller", "direct"):
            raise ValueError(f"unknown mode {mode!r}")
        self._pending_mode = mode

    def request_calibration(self, tolerance: float = 0.5, seed: int = 0) -> None:
        self._calibrate_request = {"tolerance": tolerance, "seed": seed}

    def snapshot(self) -> dict | None:
        return self._snapshot

    def state_doc(self) -> dict:
        snap = self._snapshot
        return {
            "schema": configio.SCHEMA_VERSION,
            "kind": "session_state",
            "mode": self.mode,
            "controller": self.active_kind,
            "available_controllers": sorted(self.controllers),
            "rate_hz": self.rate_hz if self.mode == "controller" else self.direct_rate_hz,
            "calibrating": self._calibrate_request is not None,
            "digests": {
                "plant": plant_digest(self.config),
                "geometry": geometry_digest(self.geometry),
                "calibration": self.calibration.digest(),
            },
            "loop": self.stats.snapshot(),
            "reading": None if snap is None else snap["reading_doc"],
            "tick": 0 if snap is None else snap["tick"],
        }

    # --- loop side -----------------------------------------------------------

    def _period_s(self) -> float:
        rate = self.rate_hz if self.mode == "controller" else self.direct_rate_hz
        return 1.0 / rate

    def _apply_pending(self) -> None:
        if self._pending_kind is not None:
            self.active_kind = self._pending_kind
            self.controllers[self.active_kind].reset()
            self._pending_kind = None
        if self._pending_mode is not None and self._pending_mode != self.mode:
            self.mode = self._pending_mode
            self.mailbox.take()  # a mode switch invalidates queued frames
        self._pending_mode = None

    def _run_calibration(self) -> None:
        req = self._calibrate_request
        result = calibrate(
            self.config,
            self.geometry,
            tolerance=req["tolerance"],
            seed=req["seed"],
            timestamp_ms=int(self._logical_ms),
        )
        self.calibration = result
        for controller in self.controllers.values():
            controller.calibration = result
            controller.reset()
        self._calibrate_request = None

    def tick_once(self) -> dict:
        """One control step: consume the freshest frame, drive the plant."""
        self._apply_pending()
        item = self.mailbox.take()
        if isinstance(item, TeleopFrame):
            controller = self.controllers[self.active_kind]
            self._command = controller.step(item.targets)
        elif isinstance(item, MotorFrame):
            self._command = item.command.copy()
        period_ms = self._period_s() * 1e3
        self._logical_ms += period_ms
        reading = read_sensors(
            self.config, self.geometry, self._command, t_ms=self._logical_ms
        )
        self._tick += 1
        doc = reading_to_doc(reading, self._tick)
        snap = {"tick": self._tick, "reading": reading, "reading_doc": doc}
        self._snapshot = snap
        self.readings.append(reading)
        return snap

    def _loop(self) -> None:
        period = self._period_s()
        next_wake = time.perf_counter() + period
        while not self._stop.is_set():
            if self._calibrate_request is not None:
                self._run_calibration()
                period = self._period_s()
                next_wake = time.perf_counter() + period  # re-base after the pause
                continue
            _sleep_until(next_wake)
            self.tick_once()
            done = time.perf_counter()
            deadline = next_wake + period
            self.stats.record(done - deadline, done)
            new_period = self._period_s()
            if new_period != period:
                period = new_period
                next_wake = done + period
            else:
                next_wake = next_wake + period
                if done > next_wake:  # fell more than a full period behind
                    next_wake = done + period

    def start(self) -> None:
        if self._thread is not None:
            raise RuntimeError("session already started")
        self._thread = threading.Thread(target=self._loop, name="control-loop", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None


# --- recordings and replay -----------------------------------------------------


def write_recording(path, frames: list[TeleopFrame]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frame in frames:
            fh.write(configio.canonical_json(configio.jsonable(teleop_frame_to_doc(frame))))
            fh.write("\n")


def read_recording(path) -> list[TeleopFrame]:
    frames = []
    last = -np.inf
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            frame = parse_teleop_frame(json.loads(line))
            if frame.t_ms <= last:
                raise TimestampOrderError(
                    f"recording timestamps out of order at {frame.t_ms}"
                )
            last = frame.t_ms
            frames.append(frame)
    return frames


def validation_recording(vset: ValidationSet, period_ms: float = 1e3 / CONTROLLER_RATE_HZ):
    """A validation set rendered as a TeleopFrame stream."""
    frames = []
    for step in range(vset.frames.shape[0]):
        targets = {f: vset.finger_states(f)[step] for f in FINGERS}
        frames.append(
            TeleopFrame(t_ms=(step + 1) * period_ms, targets=targets, source="replay-file")
        )
    return frames


def replay_frames(
    frames: list[TeleopFrame],
    controller: HandController,
    config: PlantConfig,
    geometry: HandGeometry,
) -> EvalReport:
    """Synchronous deterministic replay scored like the evaluation module.

    The frame stream fully determines the target pose per step (thumb
    fingertip plus finger joint angles), so a recording written from a
    validation set replays to the identical report: same controller
    inputs, same target fingertips, same arithmetic.
    """
    from .geometry import forward_kinematics_batch
    from .layout import FINGER_JOINTS
    from .plant import actuate_batch

    if not frames:
        return EvalReport(
            controller=controller.kind,
            set_kind="replay",
            steps=0,
            per_finger_cm={f: np.zeros(3) for f in FINGERS},
            overall_cm=np.zeros(3),
            digests={"plant": plant_digest(config), "geometry": geometry_digest(geometry)},
        )
    joints = np.zeros((len(frames), 15))
    thumb_targets = np.zeros((len(frames), 3))
    for i, frame in enumerate(frames):
        thumb_targets[i] = frame.targets["thumb"]
        for finger in FINGERS[1:]:
            lo, _, hi = FINGER_JOINTS[finger]
            joints[i, lo : hi + 1] = frame.targets[finger]
    controller.reset()
    commands = np.zeros((len(frames), N_MOTORS))
    for i, frame in enumerate(frames):
        commands[i] = controller.step(frame.targets)
    achieved = forward_kinematics_batch(geometry, actuate_batch(config, geometry, commands))
    target_tips = forward_kinematics_batch(geometry, joints)[:, :, -1, :].copy()
    # each chain's kinematics reads only its own angles, so finger tips
    # match the recording's source frames bit for bit; the thumb target
    # is the recorded fingertip itself
    target_tips[:, 0, :] = thumb_targets
    err_mm = np.abs(achieved[:, :, -1, :] - target_tips)
    per_finger = {
        finger: err_mm[:, i, :].mean(axis=0) / 10.0 for i, finger in enumerate(FINGERS)
    }
    return EvalReport(
        controller=controller.kind,
        set_kind="replay",
        steps=len(frames),
        per_finger_cm=per_finger,
        overall_cm=err_mm.mean(axis=(0, 1)) / 10.0,
        digests={
            "plant": plant_digest(config),
            "geometry": geometry_digest(geometry),
            "calibration": controller.calibration.digest(),
        },
    )


# --- HTTP/WS app -----------------------------------------------------------------


def build_app(session: ControlSession, ui_dir: str | Path | None = None) -> FastAPI:
    import asyncio

    app = FastAPI(title="tendonhand service", docs_url=None, redoc_url=None)

    def _json(doc, status=200):
        return JSONResponse(configio.jsonable(doc), status_code=status)

    @app.get("/state")
    def get_state():
        return _json(session.state_doc())

    @app.get("/configs")
    def get_configs():
        return _json(
            {
                "schema": configio.SCHEMA_VERSION,
                "kind": "service_configs",
                "geometry": geometry_to_doc(session.geometry),
                "plant": plant_to_doc(session.config),
                "calibration": calibration_to_doc(session.calibration),
                "controllers": sorted(session.controllers),
            }
        )

    @app.post("/target")
    async def post_target(payload: dict):
        try:
            if session.mode == "controller":
                frame = parse_teleop_frame(payload)
                session.submit_teleop(frame)
            else:
                frame = parse_motor_frame(
                    payload, session.config.motor_min, session.config.motor_max
                )
                session.submit_motor(frame)
        except (ValueError, TimestampOrderError, RepresentationMismatchError) as err:
            return _json({"accepted": False, "reason": str(err)}, status=422)
        return _json({"accepted": True, "t_ms": frame.t_ms})

    @app.post("/controller")
    async def post_controller(payload: dict):
        kind = payload.get("kind")
        try:
            session.switch_controller(kind)
        except ValueError as err:
            return _json({"accepted": False, "reason": str(err)}, status=422)
        return _json({"accepted": True, "controller": kind})

    @app.post("/mode")
    async def post_mode(payload: dict):
        mode = payload.get("mode")
        try:
            session.switch_mode(mode)
        except ValueError as err:
            return _json({"accepted": False, "reason": str(err)}, status=422)
        return _json({"accepted": True, "mode": mode})

    @app.post("/calibrate")
    async def post_calibrate(payload: dict | None = None):
        payload = payload or {}
        session.request_calibration(
            tolerance=float(payload.get("tolerance", 0.5)),
            seed=int(payload.get("seed", 0)),
        )
        if session._thread is None:  # no loop to pick the request up
            session._run_calibration()
        while session._calibrate_request is not None:
            await asyncio.sleep(0.02)
        return _json(
            {
                "accepted": True,
                "calibration": calibration_to_doc(session.calibration),
            }
        )

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        last_tick = -1
        poll_s = session._period_s() / 2.0

        async def sender():
            nonlocal last_tick
            while True:
                snap = session.snapshot()
                if snap is not None and snap["tick"] != last_tick:
                    last_tick = snap["tick"]
                    await ws.send_text(
                        configio.canonical_json(configio.jsonable(snap["reading_doc"]))
                    )
                await asyncio.sleep(poll_s)

        async def receiver():
            while True:
                text = await ws.receive_text()
                try:
                    doc = json.loads(text)
                    if session.mode == "controller":
                        session.submit_teleop(parse_teleop_frame(doc))
                    else:
                        session.submit_motor(
                            parse_motor_frame(
                                doc, session.config.motor_min, session.config.motor_max
                            )
                        )
                except (ValueError, TimestampOrderError, RepresentationMismatchError) as err:
                    await ws.send_text(
                        json.dumps({"kind": "error", "reason": str(err)})
                    )

        send_task = asyncio.create_task(sender())
        try:
            await receiver()
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="panel")

    return app


def serve(
    session: ControlSession,
    host: str = "127.0.0.1",
    port: int = 8321,
    ui_dir: str | Path | None = None,
) -> None:
    import uvicorn

    session.start()
    try:
        uvicorn.run(build_app(session, ui_dir=ui_dir), host=host, port=port, log_level="warning")
    finally:
        session.stop()
