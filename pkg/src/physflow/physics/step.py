"""The coupled multi-material step: dispatch per-object solvers, then resolve
cross-family and background contacts, once per substep."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import NumericalBlowup
from ..scene import (
    ClothMaterial, DynamicObject, ElasticMaterial, GranularMaterial, LiquidMaterial,
    RigidMaterial, SceneState, SmokeMaterial,
)
from . import collisions as coll
from .mpm import MpmGrid, mpm_substep_arrays, spatial_order
from .pbd import pbd_substep_arrays
from .rigid import rigid_substep_arrays


@dataclass
class SimConfig:
    dt: float = 1e-2  # step time, s
    substeps: int = 10
    particle_size: float = 1e-2  # m
    mpm_grid_density: int = 64  # cells per meter
    pbd_iterations: int = 10
    seed: int = 0
    mpm_max_grid_dim: int = 64
    smoke_buoyancy: float = 0.0  # optional upward acceleration on smoke, off by default
    contact_friction: float = 0.1  # fallback Coulomb coefficient for non-rigid pairs
    blowup_limit: float = 1e6  # |position| beyond this counts as a blowup

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not (1 <= self.substeps <= 20):
            raise ValueError("substeps must be in [1, 20]")
        if self.mpm_grid_density < 8:
            raise ValueError("mpm grid density must be >= 8")
        if self.pbd_iterations < 1:
            raise ValueError("pbd_iterations must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def scene_aabb(state: SceneState) -> tuple[np.ndarray, np.ndarray]:
    pts = [state.background_positions] if len(state.background_positions) else []
    pts += [o.positions for o in state.objects]
    if not pts:
        return np.zeros(3), np.ones(3)
    lo = np.min([p.min(0) for p in pts], axis=0)
    hi = np.max([p.max(0) for p in pts], axis=0)
    return lo, hi


class PhysicsWorkspace:
    """Per-session scratch: MPM grid and static collider index, sized once from
    the initial scene so grid geometry stays fixed across the run."""

    def __init__(self, state: SceneState, config: SimConfig):
        self.config = config
        lo, hi = scene_aabb(state)
        self.grid: MpmGrid | None = None
        if any(isinstance(o.material, (LiquidMaterial, GranularMaterial)) for o in state.objects):
            self.grid = MpmGrid(lo, hi, config.mpm_grid_density, config.mpm_max_grid_dim)
            self.grid.add_colliders(state.background_positions)
        self.static_index: coll.HashGrid | None = None
        if len(state.background_positions):
            # index only the region dynamics can plausibly reach
            margin = max(0.5, 0.25 * float((hi - lo).max()))
            dyn = [o.positions for o in state.objects]
            if dyn:
                dlo = np.min([p.min(0) for p in dyn], axis=0) - margin
                dhi = np.max([p.max(0) for p in dyn], axis=0) + margin
            else:
                dlo, dhi = lo, hi
            self.static_index = coll.HashGrid(
                state.background_positions, config.particle_size, dlo, dhi)
        self._stress: dict[int, np.ndarray] = {}
        self._orders: dict[int, np.ndarray] = {}
        self._keys: dict[int, np.ndarray] = {}
        self._accel_zero: dict[int, np.ndarray] = {}
        self._accel_g: dict[int, np.ndarray] = {}
        self._prev: dict[int, np.ndarray] = {}

    def stress_scratch(self, i: int, n: int) -> np.ndarray:
        buf = self._stress.get(i)
        if buf is None or len(buf) != n:
            buf = np.empty((n, 3, 3))
            self._stress[i] = buf
        return buf

    def zero_accel(self, i: int, n: int) -> np.ndarray:
        buf = self._accel_zero.get(i)
        if buf is None or len(buf) != n:
            buf = np.zeros((n, 3))
            self._accel_zero[i] = buf
        else:
            buf[:] = 0.0
        return buf

    def _keyed(self, store: dict, i: int, n: int) -> np.ndarray:
        buf = store.get(i)
        if buf is None or len(buf) != n:
            buf = np.empty((n, 3))
            store[i] = buf
        return buf

    def gravity_accel(self, i: int, accel: np.ndarray, gravity: np.ndarray) -> np.ndarray:
        buf = self._keyed(self._accel_g, i, len(accel))
        np.add(accel, gravity, out=buf)
        return buf

    def prev_buf(self, i: int, n: int) -> np.ndarray:
        return self._keyed(self._prev, i, n)


def _friction_for(obj: DynamicObject, config: SimConfig) -> float:
    if isinstance(obj.material, RigidMaterial):
        return obj.material.friction_coefficient
    return config.contact_friction


def _check_finite(obj: DynamicObject, index: int, limit: float) -> None:
    pos, vel = obj.positions, obj.velocities
    if not np.isfinite(pos).all() or not np.isfinite(vel).all():
        raise NumericalBlowup(f"non-finite state in object {index} ({obj.name or obj.material.kind})", index)
    if np.abs(pos).max(initial=0.0) > limit:
        raise NumericalBlowup(f"object {index} escaped beyond {limit:g} m", index)


def physics_step(state: SceneState, actions, config: SimConfig,
                 workspace: PhysicsWorkspace | None = None,
                 resolved=None, gripper=None) -> SceneState:
    """Advance the scene by one step of ``config.dt`` under the given actions.

    Returns a new SceneState; the background is shared (it never changes).
    ``resolved``/``gripper`` let the streaming loop pass pre-resolved actions
    and a persistent gripper proxy; one-off callers can ignore them.
    """
    from ..actions import resolve_actions, step_gripper  # deferred to avoid cycle

    if resolved is None:
        resolved = resolve_actions(actions, state, state.sim_time)
    if workspace is None:
        workspace = PhysicsWorkspace(state, config)

    new = state.copy()
    n_obj = len(new.objects)
    dt_sub = config.dt / config.substeps

    # advance the kinematic gripper once per step; its boxes collide per substep
    boxes = []
    if gripper is not None:
        if resolved.gripper_target is not None:
            gripper.set_target(*resolved.gripper_target)
        step_gripper(gripper, config.dt)
        boxes = gripper.collider_boxes()

    grav = new.gravity
    accels = []  # action accelerations only (MPM adds gravity in its kick)
    accels_g = []  # with gravity folded in, for rigid/pbd
    for i, obj in enumerate(new.objects):
        a = resolved.accelerations.get(i)
        if a is None:
            a = workspace.zero_accel(i, obj.count)
        if isinstance(obj.material, SmokeMaterial) and config.smoke_buoyancy:
            a = a + np.array([0.0, 0.0, config.smoke_buoyancy])
        a = np.ascontiguousarray(a, dtype=np.float64)
        accels.append(a)
        accels_g.append(workspace.gravity_accel(i, a, grav))

    prev_bufs = [workspace.prev_buf(i, o.count) for i, o in enumerate(new.objects)]

    for i, obj in enumerate(new.objects):
        if isinstance(obj.material, (LiquidMaterial, GranularMaterial)):
            keys = workspace._keys.get(i)
            if keys is None or len(keys) != obj.count:
                keys = np.empty(obj.count, np.int64)
                workspace._keys[i] = keys
            workspace._orders[i] = spatial_order(obj.positions, workspace.grid, keys)

    for _ in range(config.substeps):
        for i, obj in enumerate(new.objects):
            mat = obj.material
            if isinstance(mat, RigidMaterial):
                prev_bufs[i][:] = obj.positions
                rigid_substep_arrays(obj.positions, obj.velocities, prev_bufs[i],
                                     obj.solver_state.masses, obj.solver_state.rest_positions,
                                     obj.solver_state.rest_com, accels_g[i], dt_sub)
            elif isinstance(mat, (ElasticMaterial, ClothMaterial, SmokeMaterial)):
                pbd_substep_arrays(obj.positions, obj.velocities, prev_bufs[i],
                                   obj.solver_state, mat, accels_g[i], dt_sub, config.pbd_iterations)
            else:  # liquid / granular
                mpm_substep_arrays(obj.positions, obj.velocities, obj.solver_state, mat,
                                   workspace.grid, accels[i], grav, dt_sub,
                                   workspace.stress_scratch(i, obj.count),
                                   mu_bc=_friction_for(obj, config),
                                   order=workspace._orders[i])
        _resolve_contacts(new, config, workspace, boxes, dt_sub)

    for i, obj in enumerate(new.objects):
        _check_finite(obj, i, config.blowup_limit)
    new.sim_time = state.sim_time + config.dt
    return new


def _resolve_contacts(state: SceneState, config: SimConfig,
                      workspace: PhysicsWorkspace, boxes, dt_sub: float) -> None:
    h = config.particle_size
    objs = state.objects
    for i, obj in enumerate(objs):
        mu = _friction_for(obj, config)
        if workspace.static_index is not None:
            coll.collide_with_static(obj.positions, obj.velocities, workspace.static_index,
                                     h, mu, dt_sub)
        if boxes:
            coll.collide_with_boxes(obj.positions, obj.velocities, boxes, h, 0.8, dt_sub)
    for i in range(len(objs)):
        for j in range(i + 1, len(objs)):
            a, b = objs[i], objs[j]
            if not coll.aabbs_overlap(a.positions, b.positions, 2 * h):
                continue
            mu = max(_friction_for(a, config), _friction_for(b, config))
            coll.collide_pair(a.positions, a.velocities, 1.0 / a.masses,
                              b.positions, b.velocities, 1.0 / b.masses, h, mu, dt_sub)


def resolve_collisions(state: SceneState, config: SimConfig) -> SceneState:
    """One standalone contact-projection pass over the current positions."""
    new = state.copy()
    ws = PhysicsWorkspace(new, config)
    _resolve_contacts(new, config, ws, [], config.dt / config.substeps)
    return new
