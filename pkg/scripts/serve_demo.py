"""Serve a trained run over HTTP/WS, building a small one if needed.

Point the frontend (or curl) at http://127.0.0.1:8321 afterwards:

    curl localhost:8321/state
    curl localhost:8321/configs
"""

import subprocess
import sys
from pathlib import Path

RUN = Path("runs/quickstart")

if not (RUN / "controllers").exists():
    print("no trained run found, building runs/quickstart first")
    subprocess.run([sys.executable, "scripts/quickstart.py"], check=True)

subprocess.run(
    [sys.executable, "-m", "tendonhand.cli", "--run-dir", str(RUN), "serve",
     "--port", "8321"],
    check=True,
)
