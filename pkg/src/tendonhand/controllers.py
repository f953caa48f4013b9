"""Learned inverse controllers: sequence (LSTM), MLP, k-NN, and search.

All four map a per-finger target state to that finger's motor command.
The thumb is targeted by fingertip position (mm); every other finger by
its three joint angles (deg), since those are well-defined on both the
glove side and the hand side. Motor commands are learned in the unit
box normalized by the calibrated motor range, which is what lets one
trained controller drive a different build after recalibration.

* sequence: LSTM over the past 10 states, dense/tanh/dense head, next
  motor command supervised at the window's final step
* mlp: same head on the current state alone
* knn: mean commanded motors of the k nearest dataset states
  (z-normalized Euclidean metric, ties to the lower sample index)
* search: dense grid over the unit command box scored by a learned
  forward model, ties to the lowest grid index

Checkpoints are self-describing JSON: array shapes and values,
normalization statistics, the training config, and digests of every
artifact the training consumed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import configio, neural
from .calibration import CalibrationResult
from .datagen import Dataset, dataset_digest
from .errors import (
    DatasetFormatError,
    RepresentationMismatchError,
    TrainingDivergenceError,
)
from .layout import FINGER_JOINTS, FINGER_MOTORS, FINGERS, N_MOTORS

CONTROLLER_KINDS = ("sequence", "mlp", "knn", "search")

HISTORY_WINDOW = 10


@dataclass(frozen=True)
class TrainingConfig:
    hidden: int = 64
    head_hidden: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    batch_size: int = 256
    epochs: int = 50
    window: int = HISTORY_WINDOW
    holdout_fraction: float = 0.1
    knn_k: int = 5
    grid_points: int = 50
    seed: int = 0


# Per-architecture budgets used when no config is given. The dense
# single-frame regressors hit their in-distribution floor early; longer,
# wider fits only sharpen their extrapolation outside the collected data,
# which is not behavior we want to reward in baselines. The recurrent
# controller keeps the full schedule. knn ignores the fit fields entirely.
DEFAULT_TRAINING: dict[str, TrainingConfig] = {
    "sequence": TrainingConfig(),
    "mlp": TrainingConfig(epochs=20, head_hidden=32),
    "knn": TrainingConfig(),
    "search": TrainingConfig(epochs=20, head_hidden=32),
}


def training_config_to_doc(config: TrainingConfig) -> dict:
    doc = {"schema": configio.SCHEMA_VERSION, "kind": "training"}
    doc.update(config.__dict__)
    return doc


def training_config_from_doc(doc: dict) -> TrainingConfig:
    configio.check_schema(doc, "training")
    fields = {k: v for k, v in doc.items() if k not in ("schema", "kind")}
    return TrainingConfig(**fields)


@dataclass(frozen=True)
class ControllerInput:
    finger: str
    kind: str  # 'fingertip' or 'joints'
    target: np.ndarray  # (3,)
    history: np.ndarray | None = None  # (n, 3) most recent last, optional


def input_kind(finger: str) -> str:
    return "fingertip" if finger == "thumb" else "joints"


def state_from_reading(reading, finger: str) -> np.ndarray:
    """The 3-vector a controller sees for this finger in one reading."""
    if finger == "thumb":
        return np.asarray(reading.fingertips[0], dtype=float)
    lo, _, hi = FINGER_JOINTS[finger]
    return np.asarray(reading.joints[lo : hi + 1], dtype=float)


def build_history(states: np.ndarray, window: int = HISTORY_WINDOW) -> np.ndarray:
    """Exactly ``window`` rows, front-padded by repeating the oldest state."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[0] >= window:
        return states[-window:]
    pad = np.repeat(states[:1], window - states.shape[0], axis=0)
    return np.concatenate([pad, states], axis=0)


# --- dataset views -----------------------------------------------------------


def sample_states(dataset: Dataset) -> np.ndarray:
    """(N, 3) controller-side state of every sample."""
    return np.stack([state_from_reading(s.reading, dataset.finger) for s in dataset.samples])


def sample_commands(dataset: Dataset) -> np.ndarray:
    """(N, d) commanded motors for the dataset's finger."""
    idx = list(FINGER_MOTORS[dataset.finger])
    return np.stack([s.reading.commanded[idx] for s in dataset.samples])


def split_episodes(dataset: Dataset, holdout_fraction: float):
    """Episode ids for (train, holdout); holdout is the trailing fraction."""
    ids = sorted({s.episode for s in dataset.samples})
    n_hold = max(1, int(round(len(ids) * holdout_fraction))) if holdout_fraction > 0 else 0
    if n_hold >= len(ids):
        raise ValueError("holdout fraction leaves no training episodes")
    split = len(ids) - n_hold
    return set(ids[:split]), set(ids[split:])


def windows_from_dataset(dataset: Dataset, window: int):
    """Sliding windows that never cross episode boundaries.

    Returns (inputs (N, window, 3), targets (N, d), episode_ids (N,)).
    The target is the motor command at the window's final step.
    """
    states = sample_states(dataset)
    commands = sample_commands(dataset)
    episodes = np.array([s.episode for s in dataset.samples])
    xs, ys, eids = [], [], []
    for eid in np.unique(episodes):
        idx = np.where(episodes == eid)[0]
        if idx.size < window:
            continue
        s = states[idx]
        strided = np.lib.stride_tricks.sliding_window_view(s, (window, 3)).reshape(
            -1, window, 3
        )
        xs.append(strided)
        ys.append(commands[idx][window - 1 :])
        eids.append(np.full(strided.shape[0], eid))
    if not xs:
        raise DatasetFormatError("dataset has no episode long enough for a window")
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(eids)


def _zfit(arr: np.ndarray):
    mean = arr.reshape(-1, arr.shape[-1]).mean(axis=0)
    std = arr.reshape(-1, arr.shape[-1]).std(axis=0)
    return mean, np.maximum(std, 1e-8)


def motor_box(calibration: CalibrationResult, finger: str):
    idx = list(FINGER_MOTORS[finger])
    return calibration.motor_min[idx].copy(), calibration.motor_max[idx].copy()


# --- models ------------------------------------------------------------------


class _SequenceModel:
    def __init__(self, rng, in_dim, hidden, head, out_dim):
        self.params: neural.Parameters = {}
        self.params.update(neural.lstm_init(rng, in_dim, hidden, "lstm"))
        self.params.update(neural.dense_init(rng, hidden, head, "h1"))
        self.params.update(neural.dense_init(rng, head, out_dim, "h2"))

    def forward(self, x):
        h, c_lstm = neural.lstm_forward(self.params, "lstm", x)
        a, c_d1 = neural.dense_forward(self.params, "h1", h)
        t, c_t = neural.tanh_forward(a)
        y, c_d2 = neural.dense_forward(self.params, "h2", t)
        return y, (c_lstm, c_d1, c_t, c_d2)

    def backward(self, cache, dy):
        c_lstm, c_d1, c_t, c_d2 = cache
        grads, dt = neural.dense_backward(self.params, c_d2, dy)
        da = neural.tanh_backward(c_t, dt)
        g1, dh = neural.dense_backward(self.params, c_d1, da)
        gl, _ = neural.lstm_backward(self.params, c_lstm, dh)
        grads.update(g1)
        grads.update(gl)
        return grads


class _DenseModel:
    def __init__(self, rng, in_dim, hidden, out_dim):
        self.params: neural.Parameters = {}
        self.params.update(neural.dense_init(rng, in_dim, hidden, "h1"))
        self.params.update(neural.dense_init(rng, hidden, out_dim, "h2"))

    def forward(self, x):
        a, c_d1 = neural.dense_forward(self.params, "h1", x)
        t, c_t = neural.tanh_forward(a)
        y, c_d2 = neural.dense_forward(self.params, "h2", t)
        return y, (c_d1, c_t, c_d2)

    def backward(self, cache, dy):
        c_d1, c_t, c_d2 = cache
        grads, dt = neural.dense_backward(self.params, c_d2, dy)
        da = neural.tanh_backward(c_t, dt)
        g1, _ = neural.dense_backward(self.params, c_d1, da)
        grads.update(g1)
        return grads


def _fit(model, x_train, y_train, x_hold, y_hold, config: TrainingConfig, rng):
    opt = neural.AdamW(
        lr=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        weight_decay=config.weight_decay,
    )
    n = x_train.shape[0]
    batch = min(config.batch_size, n)
    last_loss = np.nan
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            sel = order[start : start + batch]
            pred, cache = model.forward(x_train[sel])
            loss, dpred = neural.mse_loss(pred, y_train[sel])
            if not np.isfinite(loss):
                raise TrainingDivergenceError(f"loss became {loss}")
            grads = model.backward(cache, dpred)
            opt.update(model.params, grads)
            last_loss = loss
    hold_mse = np.nan
    if x_hold.shape[0]:
        pred, _ = model.forward(x_hold)
        hold_mse, _ = neural.mse_loss(pred, y_hold)
    return float(last_loss), float(hold_mse)


# --- checkpoints -------------------------------------------------------------


@dataclass(eq=False)
class Checkpoint:
    kind: str
    finger: str
    input_kind: str
    window: int
    arrays: dict[str, np.ndarray]
    calib_lo: np.ndarray  # (d,) train-time calibrated motor box
    calib_hi: np.ndarray
    norm: dict[str, np.ndarray]  # in_mean/in_std/out_mean/out_std
    training: TrainingConfig
    metrics: dict[str, float]
    provenance: dict[str, str]
    grid_points: int = 0
    cache: dict = field(default_factory=dict, repr=False)


def _provenance(dataset: Dataset, calibration: CalibrationResult) -> dict[str, str]:
    return {
        "dataset_digest": dataset_digest(dataset),
        "plant_digest": dataset.plant_digest,
        "geometry_digest": dataset.geometry_digest,
        "calibration_digest": calibration.digest(),
    }


def train(
    kind: str,
    dataset: Dataset,
    calibration: CalibrationResult,
    config: TrainingConfig | None = None,
) -> Checkpoint:
    if kind not in CONTROLLER_KINDS:
        raise ValueError(f"unknown controller kind {kind!r}")
    config = config or DEFAULT_TRAINING[kind]
    lo, hi = motor_box(calibration, dataset.finger)
    rng = np.random.default_rng(config.seed)
    base = dict(
        kind=kind,
        finger=dataset.finger,
        input_kind=input_kind(dataset.finger),
        window=config.window,
        calib_lo=lo,
        calib_hi=hi,
        training=config,
        provenance=_provenance(dataset, calibration),
    )

    if kind in ("sequence", "mlp"):
        x, y_raw, eids = windows_from_dataset(dataset, config.window)
        if kind == "mlp":
            x = x[:, -1, :]
        y = (y_raw - lo) / (hi - lo)
        train_ids, hold_ids = split_episodes(dataset, config.holdout_fraction)
        in_train = np.isin(eids, list(train_ids))
        in_mean, in_std = _zfit(x[in_train])
        out_mean, out_std = _zfit(y[in_train])
        xz = (x - in_mean) / in_std
        yz = (y - out_mean) / out_std
        out_dim = y.shape[1]
        if kind == "sequence":
            model = _SequenceModel(rng, 3, config.hidden, config.head_hidden, out_dim)
        else:
            model = _DenseModel(rng, 3, config.head_hidden, out_dim)
        train_loss, hold_mse = _fit(
            model, xz[in_train], yz[in_train], xz[~in_train], yz[~in_train], config, rng
        )
        return Checkpoint(
            **base,
            arrays=model.params,
            norm={"in_mean": in_mean, "in_std": in_std, "out_mean": out_mean, "out_std": out_std},
            metrics={"train_loss": train_loss, "holdout_mse": hold_mse},
        )

    states = sample_states(dataset)
    commands_unit = (sample_commands(dataset) - lo) / (hi - lo)

    if kind == "knn":
        in_mean, in_std = _zfit(states)
        return Checkpoint(
            **base,
            arrays={
                "states_z": (states - in_mean) / in_std,
                "commands_unit": commands_unit,
            },
            norm={"in_mean": in_mean, "in_std": in_std},
            metrics={"retained": float(states.shape[0])},
        )

    # search: forward model from unit command to state
    episodes = np.array([s.episode for s in dataset.samples])
    train_ids, hold_ids = split_episodes(dataset, config.holdout_fraction)
    in_train = np.isin(episodes, list(train_ids))
    in_mean, in_std = _zfit(commands_unit[in_train])
    out_mean, out_std = _zfit(states[in_train])
    xz = (commands_unit - in_mean) / in_std
    yz = (states - out_mean) / out_std
    model = _DenseModel(rng, commands_unit.shape[1], config.head_hidden, 3)
    train_loss, hold_mse = _fit(
        model, xz[in_train], yz[in_train], xz[~in_train], yz[~in_train], config, rng
    )
    return Checkpoint(
        **base,
        arrays=model.params,
        norm={"in_mean": in_mean, "in_std": in_std, "out_mean": out_mean, "out_std": out_std},
        metrics={"train_loss": train_loss, "holdout_mse": hold_mse},
        grid_points=config.grid_points,
    )


# --- prediction --------------------------------------------------------------


def unit_command_grid(grid_points: int, dims: int) -> np.ndarray:
    """(grid_points**dims, dims) unit commands, C-order (last dim fastest)."""
    axes = [np.linspace(0.0, 1.0, grid_points)] * dims
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _forward_model_states(checkpoint: Checkpoint, commands_unit: np.ndarray) -> np.ndarray:
    """Raw-space state predictions of a search checkpoint's forward model."""
    xz = (commands_unit - checkpoint.norm["in_mean"]) / checkpoint.norm["in_std"]
    h = np.tanh(xz @ checkpoint.arrays["h1.w"] + checkpoint.arrays["h1.b"])
    yz = h @ checkpoint.arrays["h2.w"] + checkpoint.arrays["h2.b"]
    return yz * checkpoint.norm["out_std"] + checkpoint.norm["out_mean"]


def _search_grid(checkpoint: Checkpoint):
    if "grid_unit" not in checkpoint.cache:
        dims = checkpoint.calib_lo.size
        grid = unit_command_grid(checkpoint.grid_points, dims)
        states = _forward_model_states(checkpoint, grid)
        checkpoint.cache["grid_unit"] = grid
        checkpoint.cache["grid_states"] = states
        # coordinate-major copy keeps the per-axis scan contiguous
        checkpoint.cache["states_T"] = np.ascontiguousarray(states.T)
        checkpoint.cache["tmp"] = np.empty(states.shape[0])
        checkpoint.cache["dist"] = np.empty(states.shape[0])
    return checkpoint.cache["grid_unit"], checkpoint.cache["grid_states"]


def knn_neighbors(dists: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest distances; exact ties go to lower indices."""
    k = min(k, dists.size)
    if k == dists.size:
        pool = np.arange(dists.size)
    else:
        pool = np.argpartition(dists, k - 1)[:k]
        # widen to include every candidate tied with the current cutoff
        cutoff = dists[pool].max()
        pool = np.where(dists <= cutoff)[0]
    order = np.lexsort((pool, dists[pool]))
    return pool[order][:k]


def predict(
    checkpoint: Checkpoint,
    inp: ControllerInput,
    motor_lo: np.ndarray | None = None,
    motor_hi: np.ndarray | None = None,
) -> np.ndarray:
    """Motor command (deg) for the checkpoint's finger under the active box.

    The active calibrated box defaults to the one stored at train time;
    passing a freshly calibrated box is what transfers the controller to
    a different build.
    """
    if inp.finger != checkpoint.finger:
        raise RepresentationMismatchError(
            f"checkpoint drives {checkpoint.finger}, input targets {inp.finger}"
        )
    if inp.kind != checkpoint.input_kind:
        raise RepresentationMismatchError(
            f"{checkpoint.finger} controller expects {checkpoint.input_kind} targets, "
            f"got {inp.kind}"
        )
    target = np.asarray(inp.target, dtype=float)
    if target.shape != (3,):
        raise RepresentationMismatchError(f"target must be shape (3,), got {target.shape}")
    lo = checkpoint.calib_lo if motor_lo is None else np.asarray(motor_lo, dtype=float)
    hi = checkpoint.calib_hi if motor_hi is None else np.asarray(motor_hi, dtype=float)

    if checkpoint.kind == "sequence":
        history = inp.history if inp.history is not None else target
        window = build_history(history, checkpoint.window)
        xz = (window - checkpoint.norm["in_mean"]) / checkpoint.norm["in_std"]
        h = _lstm_infer(checkpoint.arrays, xz[None])
        unit = _head_infer(checkpoint, h)[0]
    elif checkpoint.kind == "mlp":
        xz = (target - checkpoint.norm["in_mean"]) / checkpoint.norm["in_std"]
        h = xz[None]
        unit = _head_infer(checkpoint, h)[0]
    elif checkpoint.kind == "knn":
        tz = (target - checkpoint.norm["in_mean"]) / checkpoint.norm["in_std"]
        diff = checkpoint.arrays["states_z"] - tz
        dists = np.sqrt((diff * diff).sum(axis=1))
        take = knn_neighbors(dists, checkpoint.training.knn_k)
        unit = checkpoint.arrays["commands_unit"][take].mean(axis=0)
    elif checkpoint.kind == "search":
        grid_unit, _ = _search_grid(checkpoint)
        # accumulate (dx^2 + dy^2) + dz^2 exactly as a row-wise sum would
        states_t = checkpoint.cache["states_T"]
        acc, tmp = checkpoint.cache["dist"], checkpoint.cache["tmp"]
        np.subtract(states_t[0], target[0], out=acc)
        np.multiply(acc, acc, out=acc)
        for axis in range(1, states_t.shape[0]):
            np.subtract(states_t[axis], target[axis], out=tmp)
            np.multiply(tmp, tmp, out=tmp)
            acc += tmp
        best = int(np.argmin(acc))
        unit = grid_unit[best]
    else:  # pragma: no cover - guarded at train time
        raise ValueError(f"unknown controller kind {checkpoint.kind!r}")

    return lo + np.clip(unit, 0.0, 1.0) * (hi - lo)


def _lstm_infer(arrays: neural.Parameters, x: np.ndarray) -> np.ndarray:
    h, _ = neural.lstm_forward(arrays, "lstm", x)
    return h


def _head_infer(checkpoint: Checkpoint, h: np.ndarray) -> np.ndarray:
    t = np.tanh(h @ checkpoint.arrays["h1.w"] + checkpoint.arrays["h1.b"])
    yz = t @ checkpoint.arrays["h2.w"] + checkpoint.arrays["h2.b"]
    return yz * checkpoint.norm["out_std"] + checkpoint.norm["out_mean"]


# --- whole-hand driver -------------------------------------------------------


class HandController:
    """Five per-finger checkpoints plus the active calibration."""

    def __init__(self, checkpoints: dict[str, Checkpoint], calibration: CalibrationResult):
        missing = [f for f in FINGERS if f not in checkpoints]
        if missing:
            raise DatasetFormatError(f"manifest missing fingers: {missing}")
        kinds = {c.kind for c in checkpoints.values()}
        if len(kinds) != 1:
            raise DatasetFormatError(f"mixed controller kinds in manifest: {sorted(kinds)}")
        self.kind = kinds.pop()
        self.checkpoints = checkpoints
        self.calibration = calibration
        self._history: dict[str, list[np.ndarray]] = {f: [] for f in FINGERS}

    def reset(self) -> None:
        for h in self._history.values():
            h.clear()

    def step(self, states: dict[str, np.ndarray]) -> np.ndarray:
        """Append per-finger target states, return the full motor command."""
        command = np.zeros(N_MOTORS)
        for finger in FINGERS:
            ckpt = self.checkpoints[finger]
            state = np.asarray(states[finger], dtype=float)
            hist = self._history[finger]
            hist.append(state)
            if len(hist) > ckpt.window:
                del hist[: len(hist) - ckpt.window]
            lo, hi = motor_box(self.calibration, finger)
            cmd = predict(
                ckpt,
                ControllerInput(
                    finger=finger,
                    kind=ckpt.input_kind,
                    target=state,
                    history=np.stack(hist),
                ),
                motor_lo=lo,
                motor_hi=hi,
            )
            command[list(FINGER_MOTORS[finger])] = cmd
        return command


# --- serialization -----------------------------------------------------------


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    doc = {
        "schema": configio.SCHEMA_VERSION,
        "kind": "checkpoint",
        "controller": checkpoint.kind,
        "finger": checkpoint.finger,
        "input_kind": checkpoint.input_kind,
        "window": checkpoint.window,
        "calib_lo": checkpoint.calib_lo,
        "calib_hi": checkpoint.calib_hi,
        "grid_points": checkpoint.grid_points,
        "arrays": {
            name: {"shape": list(arr.shape), "values": arr.ravel()}
            for name, arr in checkpoint.arrays.items()
        },
        "norm": {name: arr for name, arr in checkpoint.norm.items()},
        "training": training_config_to_doc(checkpoint.training),
        "metrics": checkpoint.metrics,
        "provenance": checkpoint.provenance,
    }
    text = json.dumps(configio.jsonable(doc), sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> Checkpoint:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    configio.check_schema(doc, "checkpoint")
    arrays = {
        name: np.asarray(spec["values"], dtype=float).reshape(spec["shape"])
        for name, spec in doc["arrays"].items()
    }
    return Checkpoint(
        kind=doc["controller"],
        finger=doc["finger"],
        input_kind=doc["input_kind"],
        window=doc["window"],
        arrays=arrays,
        calib_lo=np.asarray(doc["calib_lo"], dtype=float),
        calib_hi=np.asarray(doc["calib_hi"], dtype=float),
        norm={k: np.asarray(v, dtype=float) for k, v in doc["norm"].items()},
        training=training_config_from_doc(doc["training"]),
        metrics=doc["metrics"],
        provenance=doc["provenance"],
        grid_points=doc["grid_points"],
    )


def save_manifest(path: str | Path, kind: str, checkpoint_paths: dict[str, str],
                  calibration_digest: str) -> None:
    doc = {
        "schema": configio.SCHEMA_VERSION,
        "kind": "controller_manifest",
        "controller": kind,
        "checkpoints": checkpoint_paths,
        "calibration_digest": calibration_digest,
    }
    configio.write_json_doc(path, doc)


def load_manifest(path: str | Path, calibration: CalibrationResult) -> HandController:
    path = Path(path)
    doc = configio.read_json_doc(path, "controller_manifest")
    checkpoints = {}
    for finger, rel in doc["checkpoints"].items():
        checkpoints[finger] = load_checkpoint(path.parent / rel)
    controller = HandController(checkpoints, calibration)
    if doc["controller"] != controller.kind:
        raise DatasetFormatError(
            f"manifest says {doc['controller']}, checkpoints are {controller.kind}"
        )
    return controller
