"""The per-tick engine behind both the offline runner and the live server:
drain actions -> physics -> flow/preview render -> noise warp -> SDEdit mix ->
generate, emitting one ConditioningFrame plus a generated frame per tick.

In deterministic mode the full emitted sequence is a pure function of
(scene, settings, seed, timestamped action script); wall-clock timings are
telemetry only and never feed back into the simulation.
"""

from __future__ import annotations

import io
import json
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..actions import (
    GripperProxy, TimedAction, action_from_json, action_to_json, resolve_actions,
)
from ..errors import IncompatibleSnapshot
from ..noise import (
    CHANNELS, DOWNSAMPLE, LatentFrame, NoiseState, encode_preview, generate,
    sdedit_mix, warp_noise,
)
from ..physics.step import PhysicsWorkspace, SimConfig, physics_step
from ..render import Rasterizer, SplatConfig
from ..scene import (
    Camera, ConditioningFrame, PointForce, SceneState, scene_from_bytes, scene_to_bytes,
)

_SNAPSHOT_VERSION = 1


@dataclass
class EngineSettings:
    sim: SimConfig = field(default_factory=SimConfig)
    splat: SplatConfig = field(default_factory=SplatConfig)
    alpha: float = 0.5  # SDEdit mixing coefficient
    noise_downsample: int = DOWNSAMPLE
    noise_channels: int = CHANNELS
    target_fps: float = 30.0
    deterministic: bool = False

    def to_dict(self) -> dict:
        return {
            "sim": self.sim.to_dict(),
            "splat": {"splat_radius": self.splat.splat_radius},
            "alpha": self.alpha,
            "noise_downsample": self.noise_downsample,
            "noise_channels": self.noise_channels,
            "target_fps": self.target_fps,
            "deterministic": self.deterministic,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EngineSettings":
        d = dict(d)
        sim = SimConfig(**d.pop("sim", {}))
        splat = SplatConfig(**d.pop("splat", {}))
        return cls(sim=sim, splat=splat, **d)


@dataclass
class TickResult:
    cond: ConditioningFrame
    generated: np.ndarray  # (H, W, 3) u8
    mixed_latent: LatentFrame
    events: list[tuple[int, str]] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)


class Engine:
    """Owns the evolving scene, noise carrier, gripper proxy, and counters."""

    def __init__(self, scene: SceneState, settings: Optional[EngineSettings] = None,
                 generator=None):
        self.settings = settings or EngineSettings()
        if self.settings.deterministic:
            import numba

            numba.set_num_threads(1)
        self.generator = generator
        self._initial = scene_to_bytes(scene)
        self.state = scene.copy()
        self.workspace = PhysicsWorkspace(self.state, self.settings.sim)
        cam = scene.camera
        self.raster = Rasterizer(cam.width, cam.height, self.settings.splat)
        self.noise = NoiseState.create(cam.height, cam.width, self.settings.sim.seed,
                                       self.settings.noise_downsample,
                                       self.settings.noise_channels)
        self.gripper: Optional[GripperProxy] = None
        self.frame_counter = 0
        self.active_forces: list[TimedAction] = []
        self.history: deque = deque(maxlen=4)
        self.last_cond: Optional[ConditioningFrame] = None
        self.last_render_camera: Camera = cam.copy()
        self._static_latents = None  # (z_flow, preview_latent, mixed) cache

    # -- per-tick pipeline ---------------------------------------------------

    def tick(self, actions: Sequence = ()) -> TickResult:
        events: list[tuple[int, str]] = []
        timings: dict[str, float] = {}
        now = self.state.sim_time

        for act in actions:
            if isinstance(act, PointForce):
                self.active_forces.append(TimedAction(act, now))
        live: list[TimedAction] = list(self.active_forces)
        live += [TimedAction(a, now) for a in actions if not isinstance(a, PointForce)]
        resolved = resolve_actions(live, self.state, now)
        for w in resolved.warnings:
            events.append((4, w))
        if resolved.gripper_target is not None and self.gripper is None:
            pos, quat, opening = resolved.gripper_target
            self.gripper = GripperProxy(pos.copy(), quat.copy(), opening)

        t0 = time.perf_counter()
        self.state = physics_step(self.state, (), self.settings.sim,
                                  workspace=self.workspace, resolved=resolved,
                                  gripper=self.gripper)
        t1 = time.perf_counter()
        timings["physics_ms"] = (t1 - t0) * 1e3

        # drop expired point forces (they no longer matter next tick)
        t_next = self.state.sim_time
        self.active_forces = [f for f in self.active_forces
                              if isinstance(f.action, PointForce)
                              and t_next < f.start + f.action.duration]

        cam_now = self.state.camera
        cam_next = resolved.camera_override or cam_now
        preview, depth, flow, coverage = self.raster.render(
            self.state, cam_now, cam_next, self.settings.sim.dt)
        self.last_render_camera = cam_now.copy()
        self.state.camera = cam_next
        t2 = time.perf_counter()
        timings["render_ms"] = (t2 - t1) * 1e3

        # a scene with no dynamic points and a still camera has bitwise-zero
        # flow: warping is the exact identity, so the latents are reusable
        static_tick = not self.state.objects and cam_now.same_pose(cam_next)
        if static_tick and self._static_latents is not None:
            z_flow, preview_latent, mixed = self._static_latents
            self.noise.frame_index += 1
        else:
            self.noise, z_flow = warp_noise(self.noise, flow)
            preview_latent = encode_preview(preview, self.settings.noise_downsample,
                                            self.settings.noise_channels)
            mixed = sdedit_mix(preview_latent, z_flow, self.settings.alpha)
            self._static_latents = (z_flow, preview_latent, mixed) if static_tick else None
        t3 = time.perf_counter()
        timings["noise_ms"] = (t3 - t2) * 1e3

        self.frame_counter += 1
        cond = ConditioningFrame(flow=flow, preview=preview, depth_buffer=depth,
                                 coverage=coverage, warped_noise=z_flow,
                                 frame_index=self.frame_counter,
                                 sim_time=self.state.sim_time)
        frame, err = generate(cond, tuple(self.history), self.generator, mixed)
        if err is not None:
            events.append((3, f"generator plugin failed, stub substituted: {err}"))
        self.history.append(frame)
        t4 = time.perf_counter()
        timings["generate_ms"] = (t4 - t3) * 1e3
        timings["tick_ms"] = (t4 - t0) * 1e3

        self.last_cond = cond
        return TickResult(cond, frame, mixed, events, timings)

    # -- control -------------------------------------------------------------

    def reset(self) -> None:
        """Restore the initial scene bit-exactly and reseed the noise stream."""
        self.state = scene_from_bytes(self._initial)
        self.workspace = PhysicsWorkspace(self.state, self.settings.sim)
        cam = self.state.camera
        self.raster = Rasterizer(cam.width, cam.height, self.settings.splat)
        self.noise = NoiseState.create(cam.height, cam.width, self.settings.sim.seed,
                                       self.settings.noise_downsample,
                                       self.settings.noise_channels)
        self.gripper = None
        self.frame_counter = 0
        self.active_forces = []
        self.history.clear()
        self.last_cond = None
        self.last_render_camera = cam.copy()
        self._static_latents = None

    def set_config(self, settings: EngineSettings) -> None:
        self.settings = settings
        self.workspace = PhysicsWorkspace(self.state, settings.sim)
        self.raster = Rasterizer(self.state.camera.width, self.state.camera.height,
                                 settings.splat)

    def pick_world_point(self, u: int, v: int):
        """Unproject pixel (u, v) through the latest depth buffer; None if empty."""
        if self.last_cond is None:
            return None
        cam = self.last_render_camera
        if not (0 <= u < cam.width and 0 <= v < cam.height):
            return None
        z = float(self.last_cond.depth_buffer[v, u])
        if not np.isfinite(z):
            return None
        q = np.array([(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z])
        return cam.rotation.T @ (q - cam.translation)

    # -- snapshots -----------------------------------------------------------

    def snapshot(self) -> bytes:
        """Serialize the full session state deterministically."""
        buf = io.BytesIO()
        gripper = None
        if self.gripper is not None:
            g = self.gripper
            gripper = {
                "position": g.position.tolist(), "orientation": g.orientation.tolist(),
                "opening": g.opening, "target_position": g.target_position.tolist(),
                "target_orientation": g.target_orientation.tolist(),
                "target_opening": g.target_opening,
            }
        meta = {
            "version": _SNAPSHOT_VERSION,
            "settings": self.settings.to_dict(),
            "frame_counter": self.frame_counter,
            "noise": {
                "h": self.noise.h, "w": self.noise.w, "c": self.noise.c,
                "seed": self.noise.seed, "frame_index": self.noise.frame_index,
                "rng_state": self.noise.rng.bit_generator.state,
            },
            "forces": [{"start": f.start, "action": action_to_json(f.action)}
                       for f in self.active_forces],
            "gripper": gripper,
        }
        scene_blob = np.frombuffer(scene_to_bytes(self.state), np.uint8)
        np.savez(buf, scene=scene_blob,
                 noise_px=self.noise.px, noise_py=self.noise.py,
                 noise_values=self.noise.values, noise_carrier=self.noise.carrier,
                 meta_json=np.frombuffer(json.dumps(meta).encode(), np.uint8))
        return buf.getvalue()

    def restore(self, data: bytes) -> None:
        with np.load(io.BytesIO(data), allow_pickle=False) as z:
            meta = json.loads(bytes(z["meta_json"]).decode())
            if meta["version"] != _SNAPSHOT_VERSION:
                raise IncompatibleSnapshot(
                    f"snapshot version {meta['version']} != {_SNAPSHOT_VERSION}")
            self.settings = EngineSettings.from_dict(meta["settings"])
            self.state = scene_from_bytes(bytes(z["scene"]))
            self.workspace = PhysicsWorkspace(self.state, self.settings.sim)
            cam = self.state.camera
            self.raster = Rasterizer(cam.width, cam.height, self.settings.splat)
            n = meta["noise"]
            rng = np.random.default_rng()
            rng.bit_generator.state = n["rng_state"]
            self.noise = NoiseState(h=n["h"], w=n["w"], c=n["c"], seed=n["seed"],
                                    frame_index=n["frame_index"],
                                    px=z["noise_px"].copy(), py=z["noise_py"].copy(),
                                    values=z["noise_values"].copy(),
                                    carrier=z["noise_carrier"].copy(), rng=rng)
            self.frame_counter = meta["frame_counter"]
            self.active_forces = [TimedAction(action_from_json(f["action"]), f["start"])
                                  for f in meta["forces"]]
            self.gripper = None
            if meta["gripper"] is not None:
                g = meta["gripper"]
                self.gripper = GripperProxy(np.array(g["position"]),
                                            np.array(g["orientation"]), g["opening"])
                self.gripper.set_target(np.array(g["target_position"]),
                                        np.array(g["target_orientation"]),
                                        g["target_opening"])
            self.history.clear()
            self.last_cond = None
            self.last_render_camera = cam.copy()
            self._static_latents = None


def run_scripted(engine: Engine, script: dict[int, list], duration: int):
    """Drive the engine like the stream loop would, applying scripted actions
    by arrival tick: an action that arrives at tick k first affects frame k+1.
    Frames are numbered from 1; tick-0 actions are queued before the first frame."""
    pending: list = list(script.get(0, []))
    for tick in range(1, duration + 1):
        result = engine.tick(pending)
        pending = list(script.get(tick, []))
        yield result
