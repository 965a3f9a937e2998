"""Translate the unified action stream into per-particle accelerations, a
kinematic gripper proxy, and render-camera updates.

Point forces act on any dynamic particle in range (material-agnostic) with a
linear falloff w(r) = max(0, 1 - r/radius); force fields add their acceleration
to every particle inside the region (whole scene when absent). Camera poses
only ever touch rendering. Forces are additive, so resolving a concatenation
of action lists equals summing their acceleration fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .scene import Action, Camera, CameraPose, ForceField, GripperCommand, PointForce, SceneState

# Kinematic proxy limits (two-finger parallel gripper at desk scale).
MAX_OPENING = 0.08  # m, full hand span
LINEAR_SPEED = 0.5  # m/s
ANGULAR_SPEED = 2.0  # rad/s
OPENING_RATE = 2.0  # fraction of full opening per second

_PALM_HALF = np.array([0.045, 0.025, 0.02])
_FINGER_HALF = np.array([0.008, 0.012, 0.035])
_FINGER_DROP = _PALM_HALF[2] + _FINGER_HALF[2]  # fingers hang below the palm along -z


@dataclass
class TimedAction:
    """An action plus the sim time it arrived (for force expiry)."""

    action: Action
    start: float = 0.0


@dataclass
class ResolvedActions:
    accelerations: dict[int, np.ndarray] = field(default_factory=dict)  # object -> (N, 3)
    gripper_target: Optional[tuple[np.ndarray, np.ndarray, float]] = None
    camera_override: Optional[Camera] = None
    expiry_times: list[float] = field(default_factory=list)  # one per live point force
    warnings: list[str] = field(default_factory=list)


def resolve_actions(actions: Sequence[Union[Action, TimedAction]], state: SceneState,
                    sim_time: float) -> ResolvedActions:
    out = ResolvedActions()
    for entry in actions:
        if isinstance(entry, TimedAction):
            act, start = entry.action, entry.start
        else:
            act, start = entry, sim_time
        if isinstance(act, PointForce):
            if sim_time >= start + act.duration:
                continue  # expired
            out.expiry_times.append(start + act.duration)
            hit_any = False
            for i, obj in enumerate(state.objects):
                r = np.linalg.norm(obj.positions - act.position, axis=1)
                w = 1.0 - r / act.radius
                inside = w > 0.0
                if not inside.any():
                    continue
                hit_any = True
                a = _accel_for(out, i, obj.count)
                a[inside] += (w[inside, None] * act.force) / obj.masses[inside, None]
            if not hit_any:
                out.warnings.append(
                    f"point force at {act.position.tolist()} (radius {act.radius:g}) hit no particles")
        elif isinstance(act, ForceField):
            for i, obj in enumerate(state.objects):
                if act.region is None:
                    sel = slice(None)
                else:
                    lo, hi = act.region
                    sel = np.logical_and(obj.positions >= lo, obj.positions <= hi).all(axis=1)
                    if not sel.any():
                        continue
                a = _accel_for(out, i, obj.count)
                a[sel] += act.acceleration
        elif isinstance(act, GripperCommand):
            out.gripper_target = (act.ee_position.copy(), act.ee_orientation.copy(), act.gripper_opening)
        elif isinstance(act, CameraPose):
            out.camera_override = act.camera.copy()
    return out


def _accel_for(out: ResolvedActions, i: int, n: int) -> np.ndarray:
    a = out.accelerations.get(i)
    if a is None:
        a = np.zeros((n, 3))
        out.accelerations[i] = a
    return a


# ---------------------------------------------------------------------------
# JSON round trip (scenario files and snapshots)

def action_to_json(action: Action) -> dict:
    if isinstance(action, PointForce):
        return {"type": "point_force", "position": action.position.tolist(),
                "force": action.force.tolist(), "radius": action.radius,
                "duration": action.duration}
    if isinstance(action, ForceField):
        d = {"type": "force_field", "acceleration": action.acceleration.tolist()}
        if action.region is not None:
            d["region"] = action.region.tolist()
        return d
    if isinstance(action, GripperCommand):
        return {"type": "gripper", "position": action.ee_position.tolist(),
                "orientation": action.ee_orientation.tolist(),
                "opening": action.gripper_opening}
    if isinstance(action, CameraPose):
        c = action.camera
        return {"type": "camera", "rotation": c.rotation.tolist(),
                "translation": c.translation.tolist(),
                "intrinsics": {"fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy,
                               "width": c.width, "height": c.height}}
    raise TypeError(f"cannot serialize {type(action).__name__}")


def action_from_json(d: dict, camera_template: Optional[Camera] = None,
                     default_duration: float = 1.0 / 30.0) -> Action:
    kind = d["type"]
    if kind == "point_force":
        return PointForce(np.array(d["position"], float), np.array(d["force"], float),
                          float(d["radius"]), float(d.get("duration", default_duration)))
    if kind == "force_field":
        region = np.array(d["region"], float) if "region" in d else None
        return ForceField(np.array(d["acceleration"], float), region)
    if kind == "gripper":
        return GripperCommand(np.array(d["position"], float),
                              np.array(d["orientation"], float), float(d["opening"]))
    if kind == "camera":
        intr = d.get("intrinsics")
        if intr is None:
            if camera_template is None:
                raise ValueError("camera action without intrinsics needs a template camera")
            intr = {"fx": camera_template.fx, "fy": camera_template.fy,
                    "cx": camera_template.cx, "cy": camera_template.cy,
                    "width": camera_template.width, "height": camera_template.height}
        cam = Camera(intr["fx"], intr["fy"], intr["cx"], intr["cy"],
                     intr["width"], intr["height"],
                     np.array(d["rotation"], float), np.array(d["translation"], float))
        return CameraPose(cam)
    raise ValueError(f"unknown action type {kind!r}")


# ---------------------------------------------------------------------------
# Quaternions (wxyz)

def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_slerp_capped(q0: np.ndarray, q1: np.ndarray, max_angle: float) -> np.ndarray:
    """Rotate q0 toward q1 by at most max_angle radians."""
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    dot = min(dot, 1.0)
    angle = 2.0 * np.arccos(dot)
    if angle <= max_angle or angle < 1e-12:
        return q1.copy()
    t = max_angle / angle
    s = np.sin(angle / 2.0)
    a = np.sin((1.0 - t) * angle / 2.0) / s
    b = np.sin(t * angle / 2.0) / s
    out = a * q0 + b * q1
    return out / np.linalg.norm(out)


# ---------------------------------------------------------------------------
# Gripper proxy

@dataclass
class GripperProxy:
    position: np.ndarray
    orientation: np.ndarray  # wxyz unit quaternion
    opening: float = 1.0
    target_position: np.ndarray = None
    target_orientation: np.ndarray = None
    target_opening: float = 1.0
    prev_position: np.ndarray = None
    prev_orientation: np.ndarray = None
    last_dt: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, np.float64)
        self.orientation = np.asarray(self.orientation, np.float64)
        if self.target_position is None:
            self.target_position = self.position.copy()
        if self.target_orientation is None:
            self.target_orientation = self.orientation.copy()
        self.prev_position = self.position.copy()
        self.prev_orientation = self.orientation.copy()

    def set_target(self, position, orientation, opening: float) -> None:
        self.target_position = np.asarray(position, np.float64)
        self.target_orientation = np.asarray(orientation, np.float64)
        self.target_opening = float(opening)

    def collider_boxes(self):
        """Palm + two finger boxes as (center, rotation, half_extents, v, omega)."""
        rot = quat_to_matrix(self.orientation)
        dt = self.last_dt
        if dt > 0:
            v = (self.position - self.prev_position) / dt
            omega = _angular_velocity(self.prev_orientation, self.orientation, dt)
        else:
            v = np.zeros(3)
            omega = np.zeros(3)
        sep = self.opening * MAX_OPENING
        boxes = [(self.position, rot, _PALM_HALF, v, omega)]
        for side in (-1.0, 1.0):
            local = np.array([side * (sep / 2 + _FINGER_HALF[0]), 0.0, -_FINGER_DROP])
            center = self.position + rot @ local
            box_v = v + np.cross(omega, rot @ local)
            boxes.append((center, rot, _FINGER_HALF, box_v, omega))
        return boxes


def _angular_velocity(q_prev: np.ndarray, q_now: np.ndarray, dt: float) -> np.ndarray:
    dq = quat_mul(q_now, np.array([q_prev[0], -q_prev[1], -q_prev[2], -q_prev[3]]))
    if dq[0] < 0:
        dq = -dq
    s = np.linalg.norm(dq[1:])
    if s < 1e-12:
        return np.zeros(3)
    angle = 2.0 * np.arctan2(s, dq[0])
    return (dq[1:] / s) * (angle / dt)


def step_gripper(proxy: GripperProxy, dt: float) -> GripperProxy:
    """Advance the proxy toward its target with capped linear/angular speed."""
    proxy.prev_position = proxy.position.copy()
    proxy.prev_orientation = proxy.orientation.copy()
    proxy.last_dt = dt
    delta = proxy.target_position - proxy.position
    dist = float(np.linalg.norm(delta))
    step = LINEAR_SPEED * dt
    if dist <= step or dist < 1e-12:
        proxy.position = proxy.target_position.copy()
    else:
        proxy.position = proxy.position + delta * (step / dist)
    proxy.orientation = quat_slerp_capped(proxy.orientation, proxy.target_orientation,
                                          ANGULAR_SPEED * dt)
    d_open = proxy.target_opening - proxy.opening
    cap = OPENING_RATE * dt
    proxy.opening = proxy.opening + float(np.clip(d_open, -cap, cap))
    return proxy
