"""Controller families against brute-force oracles and training sanity."""

import time

import numpy as np
import pytest

import tendonhand.calibration as C
import tendonhand.controllers as K
import tendonhand.datagen as D
import tendonhand.geometry as G
import tendonhand.plant as P
from tendonhand.errors import RepresentationMismatchError
from tendonhand.layout import FINGER_MOTORS, FINGERS


@pytest.fixture(scope="module")
def rig():
    config = P.default_plant(seed=0)
    geometry = G.default_geometry()
    calibration = C.calibrate(
        P.PlantConfig(**{**config.__dict__, "keypoint_noise_std": 0.0}),
        geometry,
        readings_per_probe=4,
    )
    datasets = {
        finger: D.collect_dataset(
            config,
            geometry,
            finger,
            episodes=50,
            steps=40,
            seed=100 + i,
            motor_lo=calibration.motor_min,
            motor_hi=calibration.motor_max,
            calibration_digest=calibration.digest(),
        )
        for i, finger in enumerate(("thumb", "index"))
    }
    return config, geometry, calibration, datasets


SMALL = K.TrainingConfig(hidden=24, head_hidden=24, epochs=25, seed=1)


# --- window construction oracle ----------------------------------------------


def test_windows_match_a_loop_construction(rig):
    _, _, _, datasets = rig
    ds = datasets["index"]
    window = 10
    x, y, eids = K.windows_from_dataset(ds, window)

    states = K.sample_states(ds)
    commands = K.sample_commands(ds)
    xs, ys, es = [], [], []
    row = 0
    for s in ds.samples:
        if s.step >= window - 1:
            start = row - (window - 1)
            xs.append(states[start : row + 1])
            ys.append(commands[row])
            es.append(s.episode)
        row += 1
    assert np.array_equal(x, np.stack(xs))
    assert np.array_equal(y, np.stack(ys))
    assert np.array_equal(eids, np.array(es))
    # windows never straddle two episodes
    per_episode = sum(s.episode == e for s in ds.samples for e in [ds.samples[0].episode])
    assert x.shape[0] == ds.episodes * (ds.steps - window + 1)


def test_history_padding():
    states = np.arange(12.0).reshape(4, 3)
    padded = K.build_history(states, 10)
    assert padded.shape == (10, 3)
    assert np.array_equal(padded[:7], np.repeat(states[:1], 7, axis=0))
    assert np.array_equal(padded[7:], states[1:])
    full = K.build_history(np.arange(36.0).reshape(12, 3), 10)
    assert np.array_equal(full, np.arange(36.0).reshape(12, 3)[-10:])


def test_state_from_reading(rig):
    config, geometry, _, _ = rig
    reading = P.read_sensors(config, geometry, config.motor_min + 40.0, t_ms=17.0)
    assert np.array_equal(K.state_from_reading(reading, "thumb"), reading.fingertips[0])
    assert np.array_equal(K.state_from_reading(reading, "middle"), reading.joints[6:9])


# --- k-NN oracle --------------------------------------------------------------


def knn_oracle(checkpoint, target, k):
    tz = (target - checkpoint.norm["in_mean"]) / checkpoint.norm["in_std"]
    states = checkpoint.arrays["states_z"]
    dists = [float(np.sqrt(((states[i] - tz) ** 2).sum())) for i in range(states.shape[0])]
    order = sorted(range(len(dists)), key=lambda i: (dists[i], i))[:k]
    unit = checkpoint.arrays["commands_unit"][order].mean(axis=0)
    return checkpoint.calib_lo + np.clip(unit, 0.0, 1.0) * (
        checkpoint.calib_hi - checkpoint.calib_lo
    )


def test_knn_matches_brute_force(rig):
    _, _, calibration, datasets = rig
    ckpt = K.train("knn", datasets["index"], calibration, SMALL)
    rng = np.random.default_rng(5)
    for _ in range(40):
        target = rng.uniform([0, 0, 0], [140, 120, 120])
        got = K.predict(ckpt, K.ControllerInput("index", "joints", target))
        want = knn_oracle(ckpt, target, SMALL.knn_k)
        assert np.array_equal(got, want)


def test_knn_tie_breaks_to_lower_index(rig):
    _, _, calibration, datasets = rig
    ckpt = K.train("knn", datasets["index"], calibration, SMALL)
    # plant a cluster of exact duplicates of one stored state
    dup = ckpt.arrays["states_z"][30].copy()
    for i in (100, 200, 300, 400, 500, 600):
        ckpt.arrays["states_z"][i] = dup
    target = dup * ckpt.norm["in_std"] + ckpt.norm["in_mean"]
    take = K.knn_neighbors(
        np.sqrt(((ckpt.arrays["states_z"] - dup) ** 2).sum(axis=1)), 5
    )
    assert list(take) == [30, 100, 200, 300, 400]
    got = K.predict(ckpt, K.ControllerInput("index", "joints", target))
    want = knn_oracle(ckpt, target, 5)
    assert np.array_equal(got, want)


# --- search oracle ------------------------------------------------------------


def search_oracle(checkpoint, target):
    gp = checkpoint.grid_points
    dims = checkpoint.calib_lo.size
    axis = np.linspace(0.0, 1.0, gp)
    best_d, best_u = np.inf, None
    w1, b1 = checkpoint.arrays["h1.w"], checkpoint.arrays["h1.b"]
    w2, b2 = checkpoint.arrays["h2.w"], checkpoint.arrays["h2.b"]
    mean_in, std_in = checkpoint.norm["in_mean"], checkpoint.norm["in_std"]
    mean_out, std_out = checkpoint.norm["out_mean"], checkpoint.norm["out_std"]
    grids = np.meshgrid(*([axis] * dims), indexing="ij")
    flat = np.stack([g.ravel() for g in grids], axis=1)
    for row in range(flat.shape[0]):
        u = flat[row]
        xz = (u - mean_in) / std_in
        pred = np.tanh(xz @ w1 + b1) @ w2 + b2
        pred = pred * std_out + mean_out
        diff = pred - target
        d = (diff * diff).sum()
        if d < best_d:
            best_d, best_u = d, u
    return checkpoint.calib_lo + best_u * (checkpoint.calib_hi - checkpoint.calib_lo)


def test_search_equals_exhaustive_enumeration(rig):
    _, _, calibration, datasets = rig
    cfg = K.TrainingConfig(hidden=24, head_hidden=24, epochs=6, seed=2, grid_points=9)
    ckpt = K.train("search", datasets["index"], calibration, cfg)
    rng = np.random.default_rng(7)
    for _ in range(30):
        target = rng.uniform([0, 0, 0], [140, 120, 120])
        got = K.predict(ckpt, K.ControllerInput("index", "joints", target))
        want = search_oracle(ckpt, target)
        assert np.array_equal(got, want)


def test_search_tie_breaks_to_lowest_grid_index(rig):
    _, _, calibration, datasets = rig
    cfg = K.TrainingConfig(hidden=8, head_hidden=8, epochs=1, seed=3, grid_points=4)
    ckpt = K.train("search", datasets["index"], calibration, cfg)
    # constant forward model: every grid point predicts the same state
    ckpt.arrays["h1.w"][:] = 0.0
    ckpt.arrays["h1.b"][:] = 0.0
    ckpt.arrays["h2.w"][:] = 0.0
    ckpt.arrays["h2.b"][:] = 0.0
    ckpt.cache.clear()
    got = K.predict(ckpt, K.ControllerInput("index", "joints", np.array([50.0, 50.0, 50.0])))
    assert np.array_equal(got, ckpt.calib_lo)  # grid index 0 is all-zeros unit command


# --- training sanity ----------------------------------------------------------


@pytest.mark.parametrize("kind", ["sequence", "mlp"])
def test_regression_controllers_fit_heldout(rig, kind):
    _, _, calibration, datasets = rig
    ckpt = K.train(kind, datasets["index"], calibration, SMALL)
    assert ckpt.metrics["holdout_mse"] < 0.05


def test_search_forward_model_fits_heldout(rig):
    _, _, calibration, datasets = rig
    # the thumb arc is the hardest map here; small data needs a hotter lr
    cfg = K.TrainingConfig(hidden=32, head_hidden=32, epochs=100, lr=3e-3, seed=1)
    ckpt = K.train("search", datasets["thumb"], calibration, cfg)
    assert ckpt.metrics["holdout_mse"] < 0.05


def test_training_replay_stays_near_recorded_commands(rig):
    _, _, calibration, datasets = rig
    ds = datasets["index"]
    ckpt = K.train("sequence", ds, calibration, SMALL)
    x, y, _ = K.windows_from_dataset(ds, SMALL.window)
    lo, hi = K.motor_box(calibration, "index")
    errs = []
    for row in range(0, x.shape[0], 97):
        target = x[row, -1]
        pred = K.predict(
            ckpt, K.ControllerInput("index", "joints", target, history=x[row])
        )
        errs.append(np.abs(pred - y[row]) / (hi - lo))
    assert np.median(np.stack(errs)) < 0.05


def test_training_is_deterministic(rig):
    _, _, calibration, datasets = rig
    a = K.train("mlp", datasets["index"], calibration, SMALL)
    b = K.train("mlp", datasets["index"], calibration, SMALL)
    assert set(a.arrays) == set(b.arrays)
    for name in a.arrays:
        assert np.array_equal(a.arrays[name], b.arrays[name])
    assert a.metrics == b.metrics


# --- prediction contract ------------------------------------------------------


def test_representation_mismatch_rejected(rig):
    _, _, calibration, datasets = rig
    ckpt = K.train("knn", datasets["thumb"], calibration, SMALL)
    with pytest.raises(RepresentationMismatchError, match="thumb"):
        K.predict(ckpt, K.ControllerInput("index", "joints", np.zeros(3)))
    with pytest.raises(RepresentationMismatchError, match="fingertip"):
        K.predict(ckpt, K.ControllerInput("thumb", "joints", np.zeros(3)))
    with pytest.raises(RepresentationMismatchError, match="shape"):
        K.predict(ckpt, K.ControllerInput("thumb", "fingertip", np.zeros(4)))


def test_outputs_always_inside_the_active_box(rig):
    _, _, calibration, datasets = rig
    ckpt = K.train("mlp", datasets["index"], calibration, SMALL)
    lo, hi = K.motor_box(calibration, "index")
    rng = np.random.default_rng(11)
    for _ in range(50):
        target = rng.uniform(-200, 400, size=3)  # far outside anything seen
        cmd = K.predict(ckpt, K.ControllerInput("index", "joints", target))
        assert np.all(cmd >= lo - 1e-12) and np.all(cmd <= hi + 1e-12)


def test_transfer_box_rescales_outputs(rig):
    _, _, calibration, datasets = rig
    ckpt = K.train("knn", datasets["index"], calibration, SMALL)
    target = np.array([60.0, 40.0, 40.0])
    lo, hi = K.motor_box(calibration, "index")
    base = K.predict(ckpt, K.ControllerInput("index", "joints", target))
    unit = (base - lo) / (hi - lo)
    new_lo, new_hi = lo + 7.0, hi + 23.0
    moved = K.predict(
        ckpt, K.ControllerInput("index", "joints", target), motor_lo=new_lo, motor_hi=new_hi
    )
    assert np.allclose(moved, new_lo + unit * (new_hi - new_lo), atol=1e-12)


def test_checkpoint_round_trip(rig, tmp_path):
    _, _, calibration, datasets = rig
    for kind in K.CONTROLLER_KINDS:
        cfg = K.TrainingConfig(hidden=8, head_hidden=8, epochs=2, seed=4, grid_points=5)
        ckpt = K.train(kind, datasets["thumb"], calibration, cfg)
        path = tmp_path / f"{kind}.json"
        K.save_checkpoint(ckpt, path)
        loaded = K.load_checkpoint(path)
        assert loaded.kind == ckpt.kind and loaded.finger == "thumb"
        for name in ckpt.arrays:
            assert np.array_equal(loaded.arrays[name], ckpt.arrays[name])
        target = np.array([40.0, 90.0, -10.0])
        inp = K.ControllerInput("thumb", "fingertip", target, history=np.tile(target, (10, 1)))
        assert np.array_equal(K.predict(loaded, inp), K.predict(ckpt, inp))


def test_prediction_latency_budget(rig):
    _, _, calibration, datasets = rig
    cfg = K.TrainingConfig(hidden=64, head_hidden=64, epochs=1, seed=5, grid_points=50)
    times = {}
    for kind in K.CONTROLLER_KINDS:
        ckpt = K.train(kind, datasets["thumb"], calibration, cfg)
        target = np.array([40.0, 90.0, -10.0])
        inp = K.ControllerInput("thumb", "fingertip", target, history=np.tile(target, (10, 1)))
        K.predict(ckpt, inp)  # warm caches
        samples = []
        for _ in range(30):
            t0 = time.perf_counter()
            K.predict(ckpt, inp)
            samples.append(time.perf_counter() - t0)
        times[kind] = np.median(samples)
    assert max(times.values()) < 0.002, times


# --- whole-hand driver --------------------------------------------------------


@pytest.fixture(scope="module")
def hand(rig):
    config, geometry, calibration, _ = rig
    checkpoints = {}
    for i, finger in enumerate(FINGERS):
        ds = D.collect_dataset(
            config,
            geometry,
            finger,
            episodes=12,
            steps=30,
            seed=300 + i,
            motor_lo=calibration.motor_min,
            motor_hi=calibration.motor_max,
            calibration_digest=calibration.digest(),
        )
        checkpoints[finger] = K.train("knn", ds, calibration, SMALL)
    return checkpoints, calibration


def test_hand_controller_covers_all_motors(rig, hand):
    config, geometry, calibration, _ = rig
    checkpoints, calibration = hand
    controller = K.HandController(checkpoints, calibration)
    reading = P.read_sensors(config, geometry, config.motor_min + 30.0, t_ms=3.0)
    states = {f: K.state_from_reading(reading, f) for f in FINGERS}
    command = controller.step(states)
    assert command.shape == (11,)
    assert np.all(command >= calibration.motor_min - 1e-9)
    assert np.all(command <= calibration.motor_max + 1e-9)
    for finger in FINGERS:
        idx = list(FINGER_MOTORS[finger])
        lone = K.predict(
            checkpoints[finger],
            K.ControllerInput(
                finger, checkpoints[finger].input_kind, states[finger],
                history=states[finger][None],
            ),
            motor_lo=calibration.motor_min[idx],
            motor_hi=calibration.motor_max[idx],
        )
        assert np.array_equal(command[idx], lone)


def test_manifest_round_trip(rig, hand, tmp_path):
    checkpoints, calibration = hand
    paths = {}
    for finger, ckpt in checkpoints.items():
        rel = f"{finger}.json"
        K.save_checkpoint(ckpt, tmp_path / rel)
        paths[finger] = rel
    K.save_manifest(tmp_path / "manifest.json", "knn", paths, calibration.digest())
    controller = K.load_manifest(tmp_path / "manifest.json", calibration)
    assert controller.kind == "knn"
    assert set(controller.checkpoints) == set(FINGERS)
