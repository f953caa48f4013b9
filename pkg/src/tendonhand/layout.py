"""Canonical orderings for joints, motors, and keypoints.

Every array in this package follows the orderings below:

* fingers: thumb, index, middle, ring, pinky
* joints (15): three per finger, base to tip; thumb has CMC, MCP, IP,
  the other fingers have MCP, PIP, DIP
* motors (11): the thumb drives each joint with its own motor; every
  other finger has one MCP motor plus one motor driving PIP and DIP
  through a shared tendon
* keypoints (5 per finger): palm anchor, knuckle, then one point per
  remaining joint, ending at the fingertip
"""

from __future__ import annotations

FINGERS = ("thumb", "index", "middle", "ring", "pinky")

N_FINGERS = 5
N_JOINTS = 15
N_MOTORS = 11
KEYPOINTS_PER_FINGER = 5

JOINT_NAMES = (
    "thumb_cmc", "thumb_mcp", "thumb_ip",
    "index_mcp", "index_pip", "index_dip",
    "middle_mcp", "middle_pip", "middle_dip",
    "ring_mcp", "ring_pip", "ring_dip",
    "pinky_mcp", "pinky_pip", "pinky_dip",
)

MOTOR_NAMES = (
    "thumb_cmc", "thumb_mcp", "thumb_ip",
    "index_mcp", "index_curl",
    "middle_mcp", "middle_curl",
    "ring_mcp", "ring_curl",
    "pinky_mcp", "pinky_curl",
)

# slices into the 15-joint vector, per finger
FINGER_JOINTS = {
    "thumb": (0, 1, 2),
    "index": (3, 4, 5),
    "middle": (6, 7, 8),
    "ring": (9, 10, 11),
    "pinky": (12, 13, 14),
}

# indices into the 11-motor vector, per finger
FINGER_MOTORS = {
    "thumb": (0, 1, 2),
    "index": (3, 4),
    "middle": (5, 6),
    "ring": (7, 8),
    "pinky": (9, 10),
}

# joints driven by each motor; a two-joint entry is a coupled tendon
MOTOR_JOINTS = (
    (0,), (1,), (2,),
    (3,), (4, 5),
    (6,), (7, 8),
    (9,), (10, 11),
    (12,), (13, 14),
)

# logging and control cadence
LOG_RATE_HZ = 15.0
LOG_PERIOD_MS = 1000.0 / LOG_RATE_HZ


def finger_index(finger: str) -> int:
    try:
        return FINGERS.index(finger)
    except ValueError:
        raise KeyError(f"unknown finger {finger!r}, expected one of {FINGERS}") from None
