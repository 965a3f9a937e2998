"""Offline deterministic scenario runner: a JSON scenario in, a directory of
numbered frames, a summary with per-stage timings and invariant checks, a
delimited timing table, and report figures out.

Scenario schema (UTF-8 JSON):

    {
      "scene": "demo" | null,          # built-in scene name, or
      "bundle": "path/to/bundle",      # a scene-bundle directory
      "seed": 0,
      "duration": 30,                  # ticks
      "config": { "sim": {...}, "splat": {...}, "alpha": 0.5, ... },
      "actions": [ {"tick": 0, "action": {"type": "point_force", ...}}, ... ],
      "outputs": ["preview", "flow", "noise", "summary"]
    }

Actions are stamped with an arrival tick; an action arriving at tick k first
affects frame k+1 (frames are numbered from 1).
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image

from . import checks
from .actions import action_from_json
from .errors import NumericalBlowup, PhysflowError
from .ingest import build_scene, load_scene_bundle
from .scenes import bench_scene
from .stream.session import Engine, EngineSettings, run_scripted

_DEFAULT_OUTPUTS = ("preview", "summary")


def load_scenario(path) -> dict:
    scenario = json.loads(Path(path).read_text("utf-8"))
    validate_scenario(scenario)
    return scenario


def validate_scenario(scenario: dict) -> None:
    duration = scenario.get("duration", 0)
    if not isinstance(duration, int) or duration <= 0:
        raise PhysflowError("scenario duration must be a positive integer")
    ticks = [a.get("tick", -1) for a in scenario.get("actions", [])]
    if any(not isinstance(t, int) or t < 0 for t in ticks):
        raise PhysflowError("action ticks must be non-negative integers")
    if sorted(ticks) != ticks:
        raise PhysflowError("actions must be sorted by tick")
    if ticks and max(ticks) > duration:
        raise PhysflowError("duration must cover the last action tick")
    if "scene" not in scenario and "bundle" not in scenario:
        raise PhysflowError("scenario needs a 'scene' or 'bundle' entry")


def _build_engine(scenario: dict) -> Engine:
    settings = EngineSettings.from_dict(scenario.get("config", {}))
    if "seed" in scenario:
        settings.sim.seed = int(scenario["seed"])
    if "bundle" in scenario:
        scene = build_scene(load_scene_bundle(scenario["bundle"]),
                            settings.sim.particle_size)
    else:
        scene = bench_scene(scenario["scene"])
    return Engine(scene, settings)


def _parse_script(scenario: dict, engine: Engine) -> dict[int, list]:
    script: dict[int, list] = {}
    cam = engine.state.camera
    dt = engine.settings.sim.dt
    for item in scenario.get("actions", []):
        act = action_from_json(item["action"], camera_template=cam, default_duration=dt)
        script.setdefault(int(item["tick"]), []).append(act)
    return script


def run_scenario(scenario: dict, outdir) -> dict:
    """Execute a scenario; returns the summary dict (also written to disk)."""
    validate_scenario(scenario)
    outdir = Path(outdir)
    frames_dir = outdir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    outputs = set(scenario.get("outputs", _DEFAULT_OUTPUTS))

    engine = _build_engine(scenario)
    script = _parse_script(scenario, engine)
    duration = int(scenario["duration"])

    records: list[dict] = []
    hasher = hashlib.sha256()
    momenta: list[np.ndarray] = []
    blowup = None
    last = None
    frame_checks_ok = True
    try:
        for result in run_scripted(engine, script, duration):
            cond = result.cond
            k = cond.frame_index
            fc = checks.frame_invariants(cond)
            frame_checks_ok &= fc["flow_zero_uncovered"] and fc["depth_finite_iff_covered"]
            mom = checks.total_momentum(engine.state)
            momenta.append(mom)
            records.append({
                "frame": k,
                "sim_time": cond.sim_time,
                "timings": result.timings,
                "kinetic_energy": checks.kinetic_energy(engine.state),
                "momentum": mom.tolist(),
                "nan_count": fc["nan_count"],
            })
            hasher.update(cond.preview.tobytes())
            hasher.update(cond.flow.tobytes())
            hasher.update(cond.warped_noise.tobytes())
            if "preview" in outputs:
                Image.fromarray(cond.preview).save(frames_dir / f"preview_{k:06d}.png")
            if "flow" in outputs:
                raw = cond.flow.astype("<f2")
                raw.tofile(frames_dir / f"flow_{k:06d}.f16")
                _sidecar(frames_dir / f"flow_{k:06d}.json", raw.shape, "f16",
                         k, cond.sim_time)
            if "noise" in outputs:
                raw = cond.warped_noise.astype("<f2")
                raw.tofile(frames_dir / f"noise_{k:06d}.f16")
                _sidecar(frames_dir / f"noise_{k:06d}.json", raw.shape, "f16",
                         k, cond.sim_time)
            if "state" in outputs:
                np.savez(frames_dir / f"state_{k:06d}.npz",
                         **{f"obj{i}_pos": o.positions for i, o in enumerate(engine.state.objects)})
            last = result
    except NumericalBlowup as exc:
        blowup = {"object_index": exc.object_index, "detail": str(exc)}

    energies = [r["kinetic_energy"] for r in records]
    stage_stats = {}
    for stage in ("physics_ms", "render_ms", "noise_ms", "generate_ms", "tick_ms"):
        vals = np.array([r["timings"].get(stage, 0.0) for r in records]) if records else np.zeros(1)
        stage_stats[stage] = {"p50": float(np.percentile(vals, 50)),
                              "p95": float(np.percentile(vals, 95)),
                              "mean": float(vals.mean())}
    summary = {
        "frames": len(records),
        "duration_requested": duration,
        "sim_time": records[-1]["sim_time"] if records else 0.0,
        "trace_hash": hasher.hexdigest(),
        "timings": stage_stats,
        "invariants": {
            "frame_checks_ok": bool(frame_checks_ok),
            "momentum_drift": checks.momentum_drift(momenta),
            "nan_count": int(sum(r["nan_count"] for r in records)),
            "kinetic_energy_peak": max(energies) if energies else 0.0,
            "kinetic_energy_final": energies[-1] if energies else 0.0,
            "settling_ratio": checks.settling_ratio(energies),
        },
        "blowup": blowup,
        "seed": engine.settings.sim.seed,
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=1), "utf-8")

    from . import report

    report.write_timings_csv(outdir / "timings.csv", records)
    if "summary" in outputs and records:
        report.figure_timings(outdir / "timings.png", records)
        report.figure_energy(outdir / "energy.png", records)
        if last is not None:
            report.figure_frames(outdir / "final_frame.png", last.cond.preview, last.cond.flow)
    return summary


def _sidecar(path: Path, shape, dtype: str, frame: int, sim_time: float) -> None:
    path.write_text(json.dumps({
        "shape": list(shape), "dtype": dtype, "byte_order": "little",
        "frame": frame, "sim_time": sim_time,
    }), "utf-8")
