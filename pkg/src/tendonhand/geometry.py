"""Hand geometry and keypoint kinematics.

The hand is 15 revolute joints across five fingers (see ``layout``).
Each finger is a serial chain anchored in the palm frame: a fixed palm
segment leads to the knuckle, then three links follow, one per joint.
Joint angles are degrees, zero meaning the chain continues straight;
positive angles flex toward the palm. All lengths are millimetres.

Palm frame: +x points radially (toward the thumb side), +y distally
(toward the fingertips), +z out of the back of the hand.

Keypoints per finger (5): palm anchor, knuckle, and the far end of each
link, the last being the fingertip. Joint angles are recovered from
keypoints as 180 deg minus the interior angle at each interior point,
which is exact for every joint whose rotation axis is perpendicular to
the incoming segment -- true for all chains here. An interior angle can
only express values up to 180 deg, so a thumb CMC driven past 180 reads
back folded (e.g. 190 reads as 170); the four fingers and the remaining
thumb joints never reach that regime.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import configio
from .errors import DegenerateKeypointError, LimitError
from .layout import (
    FINGER_JOINTS,
    FINGERS,
    JOINT_NAMES,
    KEYPOINTS_PER_FINGER,
    N_JOINTS,
)

# keypoints closer than this have no usable direction
DEGENERATE_SEGMENT_MM = 1e-9


def rotation_about(axis: np.ndarray, angle_deg: float | np.ndarray) -> np.ndarray:
    """Rodrigues rotation matrix (or batch of them) about a unit axis."""
    theta = np.deg2rad(angle_deg)
    c, s = np.cos(theta), np.sin(theta)
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    outer = np.outer(axis, axis)
    eye = np.eye(3)
    if np.ndim(angle_deg) == 0:
        return c * eye + s * k + (1.0 - c) * outer
    c = np.asarray(c)[..., None, None]
    s = np.asarray(s)[..., None, None]
    return c * eye + s * k + (1.0 - c) * outer


def _euler_zxy(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Base orientation from yaw (about z), pitch (about x), roll (about y)."""
    rz = rotation_about(np.array([0.0, 0.0, 1.0]), yaw)
    rx = rotation_about(np.array([1.0, 0.0, 0.0]), pitch)
    ry = rotation_about(np.array([0.0, 1.0, 0.0]), roll)
    return rz @ rx @ ry


@dataclass(frozen=True, eq=False)
class FingerChain:
    """One finger: base placement plus three axis/link/limit triples."""

    name: str
    base: np.ndarray  # knuckle (joint 0) centre, palm frame, mm
    yaw_deg: float
    pitch_deg: float
    roll_deg: float
    anchor_length: float  # palm segment behind joint 0, mm
    links: np.ndarray  # (3,) link lengths, mm
    axes: np.ndarray  # (3, 3) per-joint rotation axis, unit, local frame
    limits: np.ndarray  # (3,) upper angle limits, deg (lower is 0)

    def base_rotation(self) -> np.ndarray:
        return _euler_zxy(self.yaw_deg, self.pitch_deg, self.roll_deg)


@dataclass(frozen=True, eq=False)
class HandGeometry:
    chains: tuple[FingerChain, ...]
    schema: int = field(default=configio.SCHEMA_VERSION)

    def chain(self, finger: str) -> FingerChain:
        return self.chains[FINGERS.index(finger)]

    def joint_limits(self) -> np.ndarray:
        """Upper limits for all 15 joints, deg."""
        return np.concatenate([c.limits for c in self.chains])


_FLEX = np.array([-1.0, 0.0, 0.0])  # finger flexion axis: curls toward the palm
_SQ2 = 1.0 / np.sqrt(2.0)


def default_geometry() -> HandGeometry:
    """Average-adult-proportioned hand, tuned so the thumb opposes all fingers."""
    fingers = [
        # name, base, yaw, roll, anchor, links
        ("index", (25.0, 80.0, 0.0), -8.0, 6.0, 68.0, (45.0, 25.0, 22.0)),
        ("middle", (8.0, 84.0, 0.0), -2.0, 2.0, 72.0, (50.0, 30.0, 24.0)),
        ("ring", (-10.0, 80.0, 0.0), 4.0, -4.0, 68.0, (46.0, 28.0, 23.0)),
        ("pinky", (-27.0, 72.0, 0.0), 12.0, -10.0, 62.0, (37.0, 20.0, 19.0)),
    ]
    finger_limits = np.array([140.0, 120.0, 120.0])
    finger_axes = np.stack([_FLEX, _FLEX, _FLEX])
    chains = [
        FingerChain(
            name="thumb",
            base=np.array([41.0, 15.0, -21.0]),
            yaw_deg=-101.0,
            pitch_deg=-80.0,
            roll_deg=73.0,
            anchor_length=30.0,
            links=np.array([48.0, 32.0, 26.0]),
            # CMC sweeps opposition; MCP axis sits 90 deg from it around the
            # link; IP is tilted a further 45 deg toward the palm side.
            axes=np.stack(
                [
                    np.array([-1.0, 0.0, 0.0]),
                    np.array([0.0, 0.0, -1.0]),
                    np.array([-_SQ2, 0.0, -_SQ2]),
                ]
            ),
            limits=np.array([190.0, 90.0, 120.0]),
        )
    ]
    for name, base, yaw, roll, anchor, links in fingers:
        chains.append(
            FingerChain(
                name=name,
                base=np.asarray(base, dtype=float),
                yaw_deg=yaw,
                pitch_deg=0.0,
                roll_deg=roll,
                anchor_length=anchor,
                links=np.asarray(links, dtype=float),
                axes=finger_axes,
                limits=finger_limits,
            )
        )
    return HandGeometry(chains=tuple(chains))


def check_joint_limits(geometry: HandGeometry, joints: np.ndarray) -> None:
    joints = np.asarray(joints, dtype=float)
    if joints.shape != (N_JOINTS,):
        raise LimitError(f"expected {N_JOINTS} joint angles, got shape {joints.shape}")
    limits = geometry.joint_limits()
    bad = np.where((joints < 0.0) | (joints > limits))[0]
    if bad.size:
        j = int(bad[0])
        raise LimitError(
            f"joint {JOINT_NAMES[j]} angle {joints[j]:.6g} outside [0, {limits[j]:.6g}]"
        )


def clamp_to_limits(geometry: HandGeometry, joints: np.ndarray) -> np.ndarray:
    """Project onto the limit box. Idempotent; in-range values untouched."""
    joints = np.asarray(joints, dtype=float)
    return np.clip(joints, 0.0, geometry.joint_limits())


def chain_keypoints(chain: FingerChain, angles: np.ndarray) -> np.ndarray:
    """(5, 3) keypoints for one finger at the given three joint angles."""
    rot = chain.base_rotation()
    pos = chain.base.astype(float)
    pts = np.empty((KEYPOINTS_PER_FINGER, 3))
    pts[0] = pos - rot @ np.array([0.0, chain.anchor_length, 0.0])
    pts[1] = pos
    for j in range(3):
        rot = rot @ rotation_about(chain.axes[j], angles[j])
        pos = pos + rot @ np.array([0.0, chain.links[j], 0.0])
        pts[j + 2] = pos
    return pts


def forward_kinematics(geometry: HandGeometry, joints: np.ndarray) -> np.ndarray:
    """All keypoints, shape (5 fingers, 5 keypoints, 3), palm frame mm."""
    check_joint_limits(geometry, joints)
    joints = np.asarray(joints, dtype=float)
    frame = np.empty((len(FINGERS), KEYPOINTS_PER_FINGER, 3))
    for f, chain in enumerate(geometry.chains):
        lo, _, hi = FINGER_JOINTS[chain.name]
        frame[f] = chain_keypoints(chain, joints[lo : hi + 1])
    return frame


def fingertips(frame: np.ndarray) -> np.ndarray:
    """(5, 3) fingertip positions: the last keypoint of each finger."""
    return np.asarray(frame)[:, -1, :]


def joint_angles_from_keypoints(frame: np.ndarray) -> np.ndarray:
    """Recover 15 joint angles from a keypoint frame.

    Each interior keypoint contributes 180 deg minus the angle between
    the two segments meeting there, so a straight chain reads 0 deg.
    """
    frame = np.asarray(frame, dtype=float)
    if frame.shape != (len(FINGERS), KEYPOINTS_PER_FINGER, 3):
        raise ValueError(f"expected keypoint frame shape (5, 5, 3), got {frame.shape}")
    return _angles_from_frames(frame[None])[0]


def joint_angles_batch(frames: np.ndarray) -> np.ndarray:
    """Vectorized ``joint_angles_from_keypoints`` over (N, 5, 5, 3) frames."""
    frames = np.asarray(frames, dtype=float)
    return _angles_from_frames(frames)


def _angles_from_frames(frames: np.ndarray) -> np.ndarray:
    segs = np.diff(frames, axis=2)  # (N, 5, 4, 3)
    norms = np.linalg.norm(segs, axis=-1)  # (N, 5, 4)
    if np.any(norms < DEGENERATE_SEGMENT_MM):
        n, f, s = [int(i[0]) for i in np.where(norms < DEGENERATE_SEGMENT_MM)]
        raise DegenerateKeypointError(
            f"frame {n}: {FINGERS[f]} segment {s} shorter than {DEGENERATE_SEGMENT_MM} mm"
        )
    into = segs[:, :, :-1]  # segment arriving at each interior point
    out = segs[:, :, 1:]  # segment leaving it
    cos_dir = np.sum(into * out, axis=-1) / (norms[:, :, :-1] * norms[:, :, 1:])
    interior = np.degrees(np.arccos(np.clip(-cos_dir, -1.0, 1.0)))
    return (180.0 - interior).reshape(frames.shape[0], N_JOINTS)


def chain_keypoints_batch(chain: FingerChain, angles: np.ndarray) -> np.ndarray:
    """Keypoints for one finger across many poses; angles is (N, 3)."""
    angles = np.asarray(angles, dtype=float)
    n = angles.shape[0]
    rot = np.broadcast_to(chain.base_rotation(), (n, 3, 3))
    pos = np.broadcast_to(chain.base.astype(float), (n, 3)).copy()
    pts = np.empty((n, KEYPOINTS_PER_FINGER, 3))
    pts[:, 0] = pos - rot @ np.array([0.0, chain.anchor_length, 0.0])
    pts[:, 1] = pos
    for j in range(3):
        rot = rot @ rotation_about(chain.axes[j], angles[:, j])
        pos = pos + rot @ np.array([0.0, chain.links[j], 0.0])
        pts[:, j + 2] = pos
    return pts


def chain_tips_batch(chain: FingerChain, angles: np.ndarray) -> np.ndarray:
    """(N, 3) fingertip positions for one finger across many poses."""
    return chain_keypoints_batch(chain, angles)[:, -1]


def forward_kinematics_batch(geometry: HandGeometry, joints: np.ndarray) -> np.ndarray:
    """(N, 5, 5, 3) keypoint frames for (N, 15) in-limit joint vectors."""
    joints = np.asarray(joints, dtype=float)
    frames = np.empty((joints.shape[0], len(FINGERS), KEYPOINTS_PER_FINGER, 3))
    for f, chain in enumerate(geometry.chains):
        lo, _, hi = FINGER_JOINTS[chain.name]
        frames[:, f] = chain_keypoints_batch(chain, joints[:, lo : hi + 1])
    return frames


# --- config document round trip ---------------------------------------------


def geometry_to_doc(geometry: HandGeometry) -> dict:
    return {
        "schema": geometry.schema,
        "kind": "geometry",
        "units": {"length": "mm", "angle": "deg"},
        "fingers": {
            c.name: {
                "base": c.base.tolist(),
                "yaw_deg": float(c.yaw_deg),
                "pitch_deg": float(c.pitch_deg),
                "roll_deg": float(c.roll_deg),
                "anchor_length": float(c.anchor_length),
                "links": c.links.tolist(),
                "axes": c.axes.tolist(),
                "limits_deg": c.limits.tolist(),
            }
            for c in geometry.chains
        },
    }


def geometry_from_doc(doc: dict) -> HandGeometry:
    configio.check_schema(doc, "geometry")
    chains = []
    for name in FINGERS:
        spec = doc["fingers"][name]
        axes = np.asarray(spec["axes"], dtype=float)
        norms = np.linalg.norm(axes, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError(f"{name}: joint axes must be unit vectors, got norms {norms}")
        chains.append(
            FingerChain(
                name=name,
                base=np.asarray(spec["base"], dtype=float),
                yaw_deg=float(spec["yaw_deg"]),
                pitch_deg=float(spec["pitch_deg"]),
                roll_deg=float(spec["roll_deg"]),
                anchor_length=float(spec["anchor_length"]),
                links=np.asarray(spec["links"], dtype=float),
                axes=axes,
                limits=np.asarray(spec["limits_deg"], dtype=float),
            )
        )
    return HandGeometry(chains=tuple(chains))


def geometry_digest(geometry: HandGeometry) -> str:
    return configio.digest(geometry_to_doc(geometry))
