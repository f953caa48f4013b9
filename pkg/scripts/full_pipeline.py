"""Full-scale pipeline with default dataset sizes, timed per stage.

Thumb collects 500 episodes, each other finger 300, at 100 steps each;
all four controller families train on the result. Expect roughly ten
to twenty minutes on one core.
"""

import subprocess
import sys
import time

RUN = ["--run-dir", "runs/full", "--seed", "0"]


def cli(*args):
    cmd = [sys.executable, "-m", "tendonhand.cli", *RUN, *args]
    print("+", " ".join(cmd[2:]))
    t0 = time.perf_counter()
    subprocess.run(cmd, check=True)
    print(f"  [{time.perf_counter() - t0:.1f}s]")


cli("calibrate")
cli("gen-data")
cli("train")
cli("evaluate", "--robot-poses", "1000", "--humanlike-poses", "1000")
