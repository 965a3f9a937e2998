"""Golden-trace regression: the committed content hash and frame must
reproduce exactly. Environment-pinned (numpy/numba versions recorded in the
golden file); run scripts/regen_goldens.py after dependency upgrades."""

import json
from pathlib import Path

from physflow.scenario import run_scenario

GOLDEN = Path(__file__).resolve().parents[1] / "assets" / "golden"


def test_golden_trace_hash(tmp_path):
    golden = json.loads((GOLDEN / "trace.json").read_text())
    summary = run_scenario(dict(golden["scenario"]), tmp_path)
    assert summary["trace_hash"] == golden["trace_hash"]


def test_golden_frame_bytes(tmp_path):
    golden = json.loads((GOLDEN / "trace.json").read_text())
    run_scenario(dict(golden["scenario"]), tmp_path)
    produced = (tmp_path / "frames" / "preview_000012.png").read_bytes()
    assert produced == (GOLDEN / "frame_000012.png").read_bytes()
