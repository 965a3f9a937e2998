"""Rigid bodies via shape matching.

Particles are integrated freely, then projected onto the best-fit rigid
transform of the rest shape: rotation from the polar decomposition of the
mass-weighted covariance between current and rest offsets, translation from
the centers of mass. Velocities follow from the position delta.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from ..errors import DegenerateObject
from ..scene import DynamicObject, RigidState
from ._linalg import svd3


@njit(cache=True, parallel=True)
def _integrate_and_covariance(pos, vel, masses, rest, rest_com, accel, dt):
    """v += a dt; x += v dt; returns (com, A) of the predicted positions.

    The reductions are statically scheduled, so results are reproducible for a
    fixed thread count (and exact in single-threaded deterministic mode).
    """
    n = pos.shape[0]
    cx = 0.0; cy = 0.0; cz = 0.0
    mtot = 0.0
    for p in prange(n):
        vel[p, 0] += accel[p, 0] * dt
        vel[p, 1] += accel[p, 1] * dt
        vel[p, 2] += accel[p, 2] * dt
        pos[p, 0] += vel[p, 0] * dt
        pos[p, 1] += vel[p, 1] * dt
        pos[p, 2] += vel[p, 2] * dt
        m = masses[p]
        mtot += m
        cx += m * pos[p, 0]
        cy += m * pos[p, 1]
        cz += m * pos[p, 2]
    cx /= mtot; cy /= mtot; cz /= mtot
    a00 = 0.0; a01 = 0.0; a02 = 0.0
    a10 = 0.0; a11 = 0.0; a12 = 0.0
    a20 = 0.0; a21 = 0.0; a22 = 0.0
    for p in prange(n):
        m = masses[p]
        px = pos[p, 0] - cx; py = pos[p, 1] - cy; pz = pos[p, 2] - cz
        qx = rest[p, 0] - rest_com[0]; qy = rest[p, 1] - rest_com[1]; qz = rest[p, 2] - rest_com[2]
        a00 += m * px * qx; a01 += m * px * qy; a02 += m * px * qz
        a10 += m * py * qx; a11 += m * py * qy; a12 += m * py * qz
        a20 += m * pz * qx; a21 += m * pz * qy; a22 += m * pz * qz
    return cx, cy, cz, a00, a01, a02, a10, a11, a12, a20, a21, a22


@njit(cache=True, parallel=True)
def _apply_goal(pos, vel, prev, rest, rest_com, r, com, inv_dt):
    for p in prange(pos.shape[0]):
        qx = rest[p, 0] - rest_com[0]; qy = rest[p, 1] - rest_com[1]; qz = rest[p, 2] - rest_com[2]
        gx = r[0, 0] * qx + r[0, 1] * qy + r[0, 2] * qz + com[0]
        gy = r[1, 0] * qx + r[1, 1] * qy + r[1, 2] * qz + com[1]
        gz = r[2, 0] * qx + r[2, 1] * qy + r[2, 2] * qz + com[2]
        vel[p, 0] = (gx - prev[p, 0]) * inv_dt
        vel[p, 1] = (gy - prev[p, 1]) * inv_dt
        vel[p, 2] = (gz - prev[p, 2]) * inv_dt
        pos[p, 0] = gx; pos[p, 1] = gy; pos[p, 2] = gz


def rigid_substep_arrays(pos, vel, prev, masses, rest, rest_com, accel, dt_sub: float) -> None:
    """In-place shape-matching substep on raw arrays. ``prev`` must hold the
    positions from the start of the substep."""
    out = _integrate_and_covariance(pos, vel, masses, rest, rest_com, accel, dt_sub)
    cx, cy, cz = out[0], out[1], out[2]
    if pos.shape[0] == 1:
        return  # a lone particle is a free particle; no shape to match
    a = np.array(out[3:]).reshape(3, 3)
    (u00, u01, u02, u10, u11, u12, u20, u21, u22, s0, s1, _s2,
     v00, v01, v02, v10, v11, v12, v20, v21, v22) = svd3(
        a[0, 0], a[0, 1], a[0, 2], a[1, 0], a[1, 1], a[1, 2], a[2, 0], a[2, 1], a[2, 2])
    if s1 <= 1e-12 * max(s0, 1e-300):
        raise DegenerateObject("rigid rest shape is (near-)collinear; covariance is rank-deficient")
    u = np.array([[u00, u01, u02], [u10, u11, u12], [u20, u21, u22]])
    v = np.array([[v00, v01, v02], [v10, v11, v12], [v20, v21, v22]])
    r = u @ v.T  # proper rotation: svd3 guarantees det(U) = det(V) = +1
    _apply_goal(pos, vel, prev, rest, rest_com, r, np.array([cx, cy, cz]), 1.0 / dt_sub)


def rigid_substep(obj: DynamicObject, dt_sub: float, accel: np.ndarray) -> DynamicObject:
    """Spec-surface wrapper: returns a new object advanced by one substep."""
    if not isinstance(obj.solver_state, RigidState):
        raise DegenerateObject("rigid_substep needs RigidState solver state")
    out = obj.copy()
    accel = np.broadcast_to(np.asarray(accel, np.float64), (obj.count, 3)).copy()
    prev = out.positions.copy()
    st = out.solver_state
    rigid_substep_arrays(out.positions, out.velocities, prev, st.masses,
                         st.rest_positions, st.rest_com, accel, dt_sub)
    return out


def make_rigid_state(positions: np.ndarray, masses: np.ndarray) -> RigidState:
    com = (masses[:, None] * positions).sum(0) / masses.sum()
    return RigidState(positions.copy(), com, masses)
