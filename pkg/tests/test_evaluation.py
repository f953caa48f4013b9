"""Validation-set generation, replay scoring, opposition, range of motion."""

import numpy as np
import pytest

import tendonhand.calibration as C
import tendonhand.controllers as K
import tendonhand.datagen as D
import tendonhand.evaluation as E
import tendonhand.geometry as G
import tendonhand.plant as P
from tendonhand.errors import DigestMismatchError
from tendonhand.layout import FINGERS, FINGER_JOINTS, N_MOTORS


@pytest.fixture(scope="module")
def rig():
    config = P.PlantConfig(**{**P.default_plant(seed=0).__dict__, "keypoint_noise_std": 0.0})
    geometry = G.default_geometry()
    calibration = C.calibrate(config, geometry, readings_per_probe=4)
    return config, geometry, calibration


# --- validation sets -----------------------------------------------------------


def test_robot_validation_reproducible_and_in_limits(rig):
    config, geometry, _ = rig
    a = E.make_robot_validation(config, geometry, 120, seed=42)
    b = E.make_robot_validation(config, geometry, 120, seed=42)
    assert np.array_equal(a.frames, b.frames)
    assert a.frames.shape == (120, 5, 5, 3)
    assert a.plant_digest == P.plant_digest(config)
    joints = a.joints()
    limits = geometry.joint_limits()
    # extraction of a noiseless reachable pose stays inside the limit box
    assert np.all(joints >= -1e-9)
    assert np.all(joints <= limits + 1e-9)
    c = E.make_robot_validation(config, geometry, 120, seed=43)
    assert not np.array_equal(a.frames, c.frames)


def test_humanlike_validation_reproducible_within_limits(rig):
    _, geometry, _ = rig
    a = E.make_humanlike_validation(geometry, 200, seed=7)
    b = E.make_humanlike_validation(geometry, 200, seed=7)
    assert np.array_equal(a.frames, b.frames)
    joints = a.joints()
    limits = geometry.joint_limits()
    assert np.all(joints >= -1e-9)
    assert np.all(joints <= limits + 1e-9)
    assert a.plant_digest == ""  # no plant involved, targets need not be reachable


def test_humanlike_breaks_the_coupling_manifold(rig):
    _, geometry, _ = rig
    vset = E.make_humanlike_validation(geometry, 300, seed=3)
    joints = vset.joints()
    for finger in FINGERS[1:]:
        lo, mid, hi = FINGER_JOINTS[finger]
        split = np.abs(joints[:, mid] - joints[:, hi])
        # the plant can only ever produce PIP == DIP until one saturates
        assert split.max() > 30.0


def test_humanlike_is_farther_from_training_than_robot_set(rig):
    config, geometry, calibration = rig
    noisy = P.default_plant(seed=0)
    training = {}
    for i, finger in enumerate(FINGERS):
        ds = D.collect_dataset(
            noisy, geometry, finger, episodes=30, steps=40, seed=500 + i,
            motor_lo=calibration.motor_min, motor_hi=calibration.motor_max,
        )
        training[finger] = K.sample_states(ds)
    robot = E.make_robot_validation(
        config, geometry, 150, seed=77,
        motor_lo=calibration.motor_min, motor_hi=calibration.motor_max,
    )
    human = E.make_humanlike_validation(geometry, 150, seed=77)
    gap_robot = E.distribution_gap(robot, training)
    gap_human = E.distribution_gap(human, training)
    assert gap_human > gap_robot


# --- replay scoring -------------------------------------------------------------


class EchoController:
    """Replays the exact command sequence that generated a robot set."""

    kind = "echo"

    def __init__(self, commands, calibration):
        self.commands = commands
        self.calibration = calibration
        self.step_idx = 0

    def reset(self):
        self.step_idx = 0

    def step(self, states):
        cmd = self.commands[self.step_idx]
        self.step_idx += 1
        return cmd


def test_replay_with_the_generating_commands_scores_zero(rig):
    config, geometry, calibration = rig
    vset = E.make_robot_validation(config, geometry, 90, seed=11)
    rng = np.random.default_rng(11)
    commands = D.random_walk_commands(
        rng, config.motor_min, config.motor_max, 90, 2.0
    )
    report = E.replay_and_score(EchoController(commands, calibration), config, geometry, vset)
    assert report.overall_cm.max() < 1e-12
    assert report.steps == 90
    assert set(report.per_finger_cm) == set(FINGERS)


class OracleHand:
    """Brute-force grid inverse of the noiseless plant, per finger."""

    kind = "oracle"

    def __init__(self, config, geometry, calibration, resolution_deg):
        from tendonhand.layout import FINGER_MOTORS

        self.calibration = calibration
        self.geometry = geometry
        self.tables = {}
        for finger in FINGERS:
            idx = list(FINGER_MOTORS[finger])
            lo = calibration.motor_min[idx]
            hi = calibration.motor_max[idx]
            axes = [
                np.linspace(lo[d], hi[d], max(2, int(np.ceil((hi[d] - lo[d]) / resolution_deg)) + 1))
                for d in range(len(idx))
            ]
            mesh = np.meshgrid(*axes, indexing="ij")
            cmds = np.stack([m.ravel() for m in mesh], axis=1)
            full = np.repeat(calibration.motor_min[None, :], cmds.shape[0], axis=0)
            full[:, idx] = cmds
            joints = P.actuate_batch(config, geometry, full)
            j0 = 3 * FINGERS.index(finger)
            tips = G.chain_tips_batch(geometry.chain(finger), joints[:, j0 : j0 + 3])
            self.tables[finger] = (idx, cmds, tips)

    def reset(self):
        pass

    def cell_bound(self, finger):
        """Max fingertip displacement across one grid step, any axis."""
        _, cmds, tips = self.tables[finger]
        order = np.lexsort(cmds.T[::-1])
        t = tips[order]
        return float(np.sqrt(((t[1:] - t[:-1]) ** 2).sum(axis=1)).max())

    def step(self, states):
        command = np.zeros(N_MOTORS)
        for finger in FINGERS:
            idx, cmds, tips = self.tables[finger]
            if finger == "thumb":
                tip = states[finger]
            else:
                j0 = 3 * FINGERS.index(finger)
                tip = G.chain_tips_batch(
                    self.geometry.chain(finger), states[finger][None]
                )[0]
            best = int(np.argmin(((tips - tip) ** 2).sum(axis=1)))
            command[idx] = cmds[best]
        return command


def test_grid_inverse_error_shrinks_with_resolution(rig):
    config, geometry, calibration = rig
    vset = E.make_robot_validation(
        config, geometry, 60, seed=21,
        motor_lo=calibration.motor_min, motor_hi=calibration.motor_max,
    )
    coarse = OracleHand(config, geometry, calibration, resolution_deg=6.0)
    fine = OracleHand(config, geometry, calibration, resolution_deg=2.0)
    r_coarse = E.replay_and_score(coarse, config, geometry, vset)
    r_fine = E.replay_and_score(fine, config, geometry, vset)
    assert r_fine.overall_cm.sum() < r_coarse.overall_cm.sum()
    for finger in FINGERS:
        bound_cm = fine.cell_bound(finger) / 10.0
        assert r_fine.per_finger_cm[finger].max() <= bound_cm


def test_report_round_trip(tmp_path, rig):
    config, geometry, calibration = rig
    vset = E.make_robot_validation(config, geometry, 40, seed=5)
    rng = np.random.default_rng(5)
    commands = D.random_walk_commands(rng, config.motor_min, config.motor_max, 40, 2.0)
    report = E.replay_and_score(EchoController(commands, calibration), config, geometry, vset)
    path = tmp_path / "reports.jsonl"
    E.write_reports_jsonl(path, [report])
    loaded = E.read_reports_jsonl(path)
    assert len(loaded) == 1
    assert loaded[0].controller == "echo"
    assert np.array_equal(loaded[0].overall_cm, report.overall_cm)
    for finger in FINGERS:
        assert np.array_equal(loaded[0].per_finger_cm[finger], report.per_finger_cm[finger])
    table = E.format_report(report)
    assert "overall" in table and "thumb" in table


# --- opposition and range of motion ---------------------------------------------


def test_fingertip_intersection_non_empty_and_reproducible(rig):
    _, geometry, _ = rig
    a = E.fingertip_intersection(geometry, samples=60_000, seed=1)
    b = E.fingertip_intersection(geometry, samples=60_000, seed=1)
    assert set(a) == set(E.FINGER_PAIRS)
    for pair in E.FINGER_PAIRS:
        assert a[pair].shape[0] > 0, pair
        assert np.array_equal(a[pair], b[pair])


def test_zero_radius_cloud_is_empty(rig):
    _, geometry, _ = rig
    clouds = E.fingertip_intersection(geometry, samples=20_000, seed=2, radius_mm=0.0)
    assert all(c.shape[0] == 0 for c in clouds.values())


def test_range_of_motion_covers_95_percent(rig):
    config, geometry, calibration = rig
    report = E.range_of_motion_report(config, geometry, calibration)
    for name, row in report["joints"].items():
        assert row["coverage"] >= 0.95, (name, row)
        assert row["achieved_max"] <= row["limit"] + 1e-9
        assert row["achieved_min"] >= -1e-9
    again = E.range_of_motion_report(config, geometry, calibration)
    assert again == report


def test_range_of_motion_rejects_foreign_calibration(rig):
    config, geometry, calibration = rig
    other = P.perturb_build(P.default_plant(seed=0), magnitude=0.2, seed=3)
    with pytest.raises(DigestMismatchError):
        E.range_of_motion_report(other, geometry, calibration)


# --- transfer --------------------------------------------------------------------


def test_transfer_identical_plant_is_exact_zero(rig):
    config, geometry, calibration = rig
    checkpoints = {}
    noisy = P.default_plant(seed=0)
    for i, finger in enumerate(FINGERS):
        ds = D.collect_dataset(
            noisy, geometry, finger, episodes=10, steps=25, seed=900 + i,
            motor_lo=calibration.motor_min, motor_hi=calibration.motor_max,
        )
        checkpoints[finger] = K.train(
            "knn", ds, calibration, K.TrainingConfig(seed=1)
        )
    vset = E.make_robot_validation(config, geometry, 50, seed=33)
    report = E.transfer_report(
        checkpoints, calibration, config, calibration, config, geometry, vset
    )
    assert report["mean_mm"] == 0.0
    assert np.all(report["per_axis_mm"] == 0.0)


def test_transfer_rejects_mismatched_calibration(rig):
    config, geometry, calibration = rig
    other = P.perturb_build(P.default_plant(seed=0), magnitude=0.2, seed=5)
    vset = E.make_robot_validation(config, geometry, 10, seed=1)
    with pytest.raises(DigestMismatchError):
        E.transfer_report({}, calibration, config, calibration, other, geometry, vset)
