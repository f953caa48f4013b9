"""Synthetic tendon-driven hand testbed.

A desk-scale stand-in for an 11-motor, 15-joint tendon-driven hand:
keypoint kinematics, a slack/saturation tendon plant, random-walk data
collection, hand-rolled sequence/MLP/k-NN/search controllers, motor
range calibration with cross-build transfer, an evaluation harness, and
a teleoperation service with a browser UI.
"""

__version__ = "0.1.0"
