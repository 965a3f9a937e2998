"""Command line interface.

Subcommands: ``run`` (offline deterministic scenario runner), ``bench``
(latency/throughput benchmarks), ``serve`` (live WebSocket stream plus the
browser cockpit), and ``validate-bundle``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import PhysflowError


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="engine settings JSON (EngineSettings.to_dict layout)")
    p.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded, bit-reproducible mode")
    p.add_argument("--parallel", action="store_true",
                   help="production threading (physics stays bit-deterministic; timings do not)")


def _settings_from_args(args):
    from .stream.session import EngineSettings

    cfg = {}
    if args.config is not None:
        cfg = json.loads(Path(args.config).read_text("utf-8"))
    settings = EngineSettings.from_dict(cfg)
    if args.seed is not None:
        settings.sim.seed = args.seed
    if args.deterministic:
        settings.deterministic = True
    return settings


def cmd_run(args) -> int:
    from .scenario import load_scenario, run_scenario

    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario["seed"] = args.seed
    if args.deterministic:
        scenario.setdefault("config", {})["deterministic"] = True
    summary = run_scenario(scenario, args.out)
    print(json.dumps(summary, indent=1))
    if summary["blowup"] is not None:
        print("run halted by numerical blowup", file=sys.stderr)
        return 2
    return 0


def cmd_bench(args) -> int:
    from .bench import BENCHES
    from .report import write_bench_report

    names = args.benches or list(BENCHES)
    results = {}
    for name in names:
        if name not in BENCHES:
            print(f"unknown bench {name!r}; have {sorted(BENCHES)}", file=sys.stderr)
            return 2
        kwargs = {}
        if name == "stream_rate":
            kwargs["frames"] = args.frames
        for _ in range(max(args.repetitions, 1)):
            results[name] = BENCHES[name](**kwargs)
        print(json.dumps(results[name], indent=1))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.json").write_text(json.dumps(results, indent=1), "utf-8")
    write_bench_report(out, results)
    return 0 if all(r.get("pass", True) for r in results.values()) else 1


def _load_engine(args):
    from .ingest import build_scene, load_scene_bundle
    from .scenes import bench_scene
    from .stream.session import Engine

    settings = _settings_from_args(args)
    if args.bundle is not None:
        scene = build_scene(load_scene_bundle(args.bundle), settings.sim.particle_size)
    else:
        scene = bench_scene(args.scene)
    settings.target_fps = args.fps
    return Engine(scene, settings)


def cmd_serve(args) -> int:
    import threading

    from .stream.server import Session, run_stream

    engine = _load_engine(args)
    frontend = args.frontend
    if frontend is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        frontend = candidate if candidate.is_dir() else None
    if frontend is not None:
        httpd = _serve_static(Path(frontend), args.host, args.http_port)
        threading.Thread(target=httpd.serve_forever, daemon=True).start()
        print(f"cockpit: http://{args.host}:{args.http_port}/?ws=ws://{args.host}:{args.port}")
    print(f"stream:  ws://{args.host}:{args.port} ({args.fps:g} fps target)")

    import asyncio

    session = Session(engine, target_fps=args.fps)
    try:
        asyncio.run(run_stream(session, args.host, args.port))
    except KeyboardInterrupt:
        pass
    return 0


def _serve_static(directory: Path, host: str, port: int):
    from functools import partial
    from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer

    handler = partial(SimpleHTTPRequestHandler, directory=str(directory))
    return ThreadingHTTPServer((host, port), handler)


def cmd_validate_bundle(args) -> int:
    from .ingest import build_scene, load_scene_bundle

    try:
        bundle = load_scene_bundle(args.path)
        scene = build_scene(bundle)
    except PhysflowError as exc:
        print(f"INVALID: {type(exc).__name__}: {exc}")
        return 1
    print(f"OK: {bundle.width}x{bundle.height}, {len(bundle.masks)} object(s), "
          f"{len(scene.background_positions)} background points")
    for i, obj in enumerate(scene.objects):
        print(f"  object {i} ({obj.name}): {obj.material.kind}, {obj.count} particles")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="physflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario deterministically")
    p.add_argument("--scenario", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_config_args(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("bench", help="latency and throughput benchmarks")
    p.add_argument("benches", nargs="*",
                   help="bench names (default: all): stream_rate physics_rigid_pbd physics_mpm empty")
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("bench_out"))
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("serve", help="serve the live stream (and cockpit assets)")
    p.add_argument("--bundle", type=Path, default=None, help="scene bundle directory")
    p.add_argument("--scene", default="demo", help="built-in scene when no bundle given")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--http-port", type=int, default=8766)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--frontend", type=Path, default=None,
                   help="static cockpit directory (default: bundled frontend/dist)")
    _add_config_args(p)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("validate-bundle", help="check a scene bundle directory")
    p.add_argument("path", type=Path)
    p.set_defaults(fn=cmd_validate_bundle)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PhysflowError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
