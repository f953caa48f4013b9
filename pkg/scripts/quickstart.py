"""Small end-to-end run: calibrate, collect, train, evaluate, replay.

Finishes in about a minute and leaves everything under runs/quickstart.
"""

import subprocess
import sys

RUN = ["--run-dir", "runs/quickstart", "--seed", "0"]


def cli(*args):
    cmd = [sys.executable, "-m", "tendonhand.cli", *RUN, *args]
    print("+", " ".join(cmd[2:]))
    subprocess.run(cmd, check=True)


cli("calibrate")
cli("gen-data", "--episodes", "40", "--steps", "60")
cli("train", "--epochs", "20")
cli("evaluate", "--robot-poses", "200", "--humanlike-poses", "200")
cli("replay", "runs/quickstart/validation_robot.jsonl", "--controller", "sequence")
