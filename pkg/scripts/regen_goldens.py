#!/usr/bin/env python3
"""Regenerate the committed golden trace (content hash + one full frame).

Goldens pin the exact output of a small deterministic scenario in a given
environment (numpy/numba versions matter for bit-level equality); rerun this
after dependency upgrades and commit the result.
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

import numba
import numpy as np

from physflow.scenario import run_scenario

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = ROOT / "assets" / "golden"

SCENARIO = {
    "scene": "demo",
    "seed": 21,
    "duration": 12,
    "config": {"sim": {"dt": 5e-3, "substeps": 5}, "deterministic": True},
    "actions": [
        {"tick": 2, "action": {"type": "point_force", "position": [0.18, 0.0, 0.12],
                               "force": [-0.4, 0.0, 0.2], "radius": 0.08,
                               "duration": 0.05}},
    ],
    "outputs": ["preview", "summary"],
}


def main() -> int:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as td:
        summary = run_scenario(dict(SCENARIO), td)
        shutil.copy(Path(td) / "frames" / "preview_000012.png", GOLDEN / "frame_000012.png")
    (GOLDEN / "trace.json").write_text(json.dumps({
        "scenario": SCENARIO,
        "trace_hash": summary["trace_hash"],
        "environment": {"numpy": np.__version__, "numba": numba.__version__},
    }, indent=1), "utf-8")
    print("golden trace:", summary["trace_hash"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
