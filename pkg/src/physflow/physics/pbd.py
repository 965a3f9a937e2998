"""Position-based dynamics for elastic bodies, cloth, and smoke.

Elastic/cloth: XPBD constraint projection over stretch edges, second-ring
bending pairs, and (elastic only) tetrahedral volume constraints, run
Gauss-Seidel in a fixed order so results are reproducible. Compliance 0 gives
the classic hard PBD projection; relaxation under-relaxes the corrections.

Smoke: position-based fluid density (incompressibility) constraint with
poly6/spiky kernels plus XSPH viscosity smoothing; Jacobi iterations.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from ..errors import DegenerateObject
from ..scene import DynamicObject, ElasticMaterial, PbdState, SmokeMaterial
from .collisions import HashGrid


@njit(cache=True, parallel=True)
def _predict(pos, vel, prev, accel, dt):
    for p in prange(pos.shape[0]):
        vel[p, 0] += accel[p, 0] * dt
        vel[p, 1] += accel[p, 1] * dt
        vel[p, 2] += accel[p, 2] * dt
        prev[p, 0] = pos[p, 0]; prev[p, 1] = pos[p, 1]; prev[p, 2] = pos[p, 2]
        pos[p, 0] += vel[p, 0] * dt
        pos[p, 1] += vel[p, 1] * dt
        pos[p, 2] += vel[p, 2] * dt


@njit(cache=True, parallel=True)
def _finalize(pos, vel, prev, inv_dt):
    for p in prange(pos.shape[0]):
        vel[p, 0] = (pos[p, 0] - prev[p, 0]) * inv_dt
        vel[p, 1] = (pos[p, 1] - prev[p, 1]) * inv_dt
        vel[p, 2] = (pos[p, 2] - prev[p, 2]) * inv_dt


@njit(cache=True)
def _distance_sweep(pos, invm, pairs, rest, lam, alpha_tilde, relax):
    for e in range(pairs.shape[0]):
        i = pairs[e, 0]; j = pairs[e, 1]
        dx = pos[i, 0] - pos[j, 0]
        dy = pos[i, 1] - pos[j, 1]
        dz = pos[i, 2] - pos[j, 2]
        dist = np.sqrt(dx * dx + dy * dy + dz * dz)
        if dist < 1e-12:
            continue
        wi = invm[i]; wj = invm[j]
        denom = wi + wj + alpha_tilde
        if denom <= 0.0:
            continue
        c = dist - rest[e]
        dlam = (-c - alpha_tilde * lam[e]) / denom
        lam[e] += dlam
        s = relax * dlam / dist
        pos[i, 0] += wi * s * dx; pos[i, 1] += wi * s * dy; pos[i, 2] += wi * s * dz
        pos[j, 0] -= wj * s * dx; pos[j, 1] -= wj * s * dy; pos[j, 2] -= wj * s * dz


@njit(cache=True)
def _volume_sweep(pos, invm, tets, rest_vol, lam, alpha_tilde, relax):
    for t in range(tets.shape[0]):
        i0 = tets[t, 0]; i1 = tets[t, 1]; i2 = tets[t, 2]; i3 = tets[t, 3]
        e1x = pos[i1, 0] - pos[i0, 0]; e1y = pos[i1, 1] - pos[i0, 1]; e1z = pos[i1, 2] - pos[i0, 2]
        e2x = pos[i2, 0] - pos[i0, 0]; e2y = pos[i2, 1] - pos[i0, 1]; e2z = pos[i2, 2] - pos[i0, 2]
        e3x = pos[i3, 0] - pos[i0, 0]; e3y = pos[i3, 1] - pos[i0, 1]; e3z = pos[i3, 2] - pos[i0, 2]
        # gradients of 6V wrt the four vertices
        g1x = e2y * e3z - e2z * e3y; g1y = e2z * e3x - e2x * e3z; g1z = e2x * e3y - e2y * e3x
        g2x = e3y * e1z - e3z * e1y; g2y = e3z * e1x - e3x * e1z; g2z = e3x * e1y - e3y * e1x
        g3x = e1y * e2z - e1z * e2y; g3y = e1z * e2x - e1x * e2z; g3z = e1x * e2y - e1y * e2x
        g0x = -g1x - g2x - g3x; g0y = -g1y - g2y - g3y; g0z = -g1z - g2z - g3z
        vol6 = e1x * g1x + e1y * g1y + e1z * g1z
        c = (vol6 - 6.0 * rest_vol[t]) / 6.0
        w0 = invm[i0]; w1 = invm[i1]; w2 = invm[i2]; w3 = invm[i3]
        denom = (w0 * (g0x * g0x + g0y * g0y + g0z * g0z)
                 + w1 * (g1x * g1x + g1y * g1y + g1z * g1z)
                 + w2 * (g2x * g2x + g2y * g2y + g2z * g2z)
                 + w3 * (g3x * g3x + g3y * g3y + g3z * g3z)) / 36.0 + alpha_tilde
        if denom <= 1e-30:
            continue
        dlam = (-c - alpha_tilde * lam[t]) / denom
        lam[t] += dlam
        s = relax * dlam / 6.0
        pos[i0, 0] += w0 * s * g0x; pos[i0, 1] += w0 * s * g0y; pos[i0, 2] += w0 * s * g0z
        pos[i1, 0] += w1 * s * g1x; pos[i1, 1] += w1 * s * g1y; pos[i1, 2] += w1 * s * g1z
        pos[i2, 0] += w2 * s * g2x; pos[i2, 1] += w2 * s * g2y; pos[i2, 2] += w2 * s * g2z
        pos[i3, 0] += w3 * s * g3x; pos[i3, 1] += w3 * s * g3y; pos[i3, 2] += w3 * s * g3z


# ---------------------------------------------------------------------------
# Smoke: position-based fluid density constraint

_CFM_EPS = 1000.0


@njit(cache=True, parallel=True)
def _pbf_lambdas(pos, masses, rest_density, hk, origin, inv_cell, nx, ny, nz,
                 cell_start, point_idx, lambdas, densities):
    h2 = hk * hk
    poly6 = 315.0 / (64.0 * np.pi * hk ** 9)
    spiky = -45.0 / (np.pi * hk ** 6)
    inv_rho0 = 1.0 / rest_density
    for p in prange(pos.shape[0]):
        px = pos[p, 0]; py = pos[p, 1]; pz = pos[p, 2]
        ci = int((px - origin[0]) * inv_cell)
        cj = int((py - origin[1]) * inv_cell)
        ck = int((pz - origin[2]) * inv_cell)
        rho = 0.0
        gx = 0.0; gy = 0.0; gz = 0.0  # grad wrt self
        grad2 = 0.0  # sum of |grad wrt neighbors|^2
        for i in range(max(0, ci - 1), min(nx, ci + 2)):
            for j in range(max(0, cj - 1), min(ny, cj + 2)):
                for k in range(max(0, ck - 1), min(nz, ck + 2)):
                    c = (i * ny + j) * nz + k
                    for s in range(cell_start[c], cell_start[c + 1]):
                        q = point_idx[s]
                        dx = px - pos[q, 0]; dy = py - pos[q, 1]; dz = pz - pos[q, 2]
                        r2 = dx * dx + dy * dy + dz * dz
                        if r2 >= h2:
                            continue
                        rho += masses[q] * poly6 * (h2 - r2) ** 3
                        if q != p and r2 > 1e-20:
                            r = np.sqrt(r2)
                            coef = spiky * (hk - r) * (hk - r) / r * inv_rho0
                            ggx = coef * dx; ggy = coef * dy; ggz = coef * dz
                            gx += ggx; gy += ggy; gz += ggz
                            grad2 += ggx * ggx + ggy * ggy + ggz * ggz
        densities[p] = rho
        c_p = rho * inv_rho0 - 1.0
        if c_p < 0.0:
            lambdas[p] = 0.0  # no correction at the free surface
        else:
            lambdas[p] = -c_p / (grad2 + gx * gx + gy * gy + gz * gz + _CFM_EPS)


@njit(cache=True, parallel=True)
def _pbf_apply(pos, out, rest_density, hk, origin, inv_cell, nx, ny, nz,
               cell_start, point_idx, lambdas, relax):
    h2 = hk * hk
    spiky = -45.0 / (np.pi * hk ** 6)
    inv_rho0 = 1.0 / rest_density
    for p in prange(pos.shape[0]):
        px = pos[p, 0]; py = pos[p, 1]; pz = pos[p, 2]
        ci = int((px - origin[0]) * inv_cell)
        cj = int((py - origin[1]) * inv_cell)
        ck = int((pz - origin[2]) * inv_cell)
        ax = 0.0; ay = 0.0; az = 0.0
        for i in range(max(0, ci - 1), min(nx, ci + 2)):
            for j in range(max(0, cj - 1), min(ny, cj + 2)):
                for k in range(max(0, ck - 1), min(nz, ck + 2)):
                    c = (i * ny + j) * nz + k
                    for s in range(cell_start[c], cell_start[c + 1]):
                        q = point_idx[s]
                        if q == p:
                            continue
                        dx = px - pos[q, 0]; dy = py - pos[q, 1]; dz = pz - pos[q, 2]
                        r2 = dx * dx + dy * dy + dz * dz
                        if r2 >= h2 or r2 < 1e-20:
                            continue
                        r = np.sqrt(r2)
                        coef = (lambdas[p] + lambdas[q]) * spiky * (hk - r) * (hk - r) / r * inv_rho0
                        ax += coef * dx; ay += coef * dy; az += coef * dz
        out[p, 0] = px + relax * ax
        out[p, 1] = py + relax * ay
        out[p, 2] = pz + relax * az


@njit(cache=True, parallel=True)
def _xsph(pos, vel, out, masses, densities, hk, visc, origin, inv_cell, nx, ny, nz,
          cell_start, point_idx):
    h2 = hk * hk
    poly6 = 315.0 / (64.0 * np.pi * hk ** 9)
    for p in prange(pos.shape[0]):
        px = pos[p, 0]; py = pos[p, 1]; pz = pos[p, 2]
        ci = int((px - origin[0]) * inv_cell)
        cj = int((py - origin[1]) * inv_cell)
        ck = int((pz - origin[2]) * inv_cell)
        ax = 0.0; ay = 0.0; az = 0.0
        for i in range(max(0, ci - 1), min(nx, ci + 2)):
            for j in range(max(0, cj - 1), min(ny, cj + 2)):
                for k in range(max(0, ck - 1), min(nz, ck + 2)):
                    c = (i * ny + j) * nz + k
                    for s in range(cell_start[c], cell_start[c + 1]):
                        q = point_idx[s]
                        if q == p:
                            continue
                        dx = px - pos[q, 0]; dy = py - pos[q, 1]; dz = pz - pos[q, 2]
                        r2 = dx * dx + dy * dy + dz * dz
                        if r2 >= h2:
                            continue
                        w = poly6 * (h2 - r2) ** 3 * masses[q] / max(densities[q], 1e-12)
                        ax += w * (vel[q, 0] - vel[p, 0])
                        ay += w * (vel[q, 1] - vel[p, 1])
                        az += w * (vel[q, 2] - vel[p, 2])
        out[p, 0] = vel[p, 0] + visc * ax
        out[p, 1] = vel[p, 1] + visc * ay
        out[p, 2] = vel[p, 2] + visc * az


def sph_density(pos: np.ndarray, masses: np.ndarray, hk: float) -> np.ndarray:
    """SPH density estimate (poly6), used at build time and as a test oracle."""
    lo = pos.min(0) - hk
    hi = pos.max(0) + hk
    grid = HashGrid(pos, hk, lo, hi)
    lambdas = np.zeros(len(pos))
    densities = np.zeros(len(pos))
    _pbf_lambdas(pos, masses, 1.0, hk, grid.origin, 1.0 / grid.cell_size,
                 grid.nx, grid.ny, grid.nz, grid.cell_start, grid.point_idx,
                 lambdas, densities)
    return densities


def pbd_substep_arrays(pos, vel, prev, state: PbdState, material, accel, dt_sub: float,
                       iterations: int, scratch=None) -> None:
    _predict(pos, vel, prev, accel, dt_sub)
    inv_dt2 = 1.0 / (dt_sub * dt_sub)
    if isinstance(material, SmokeMaterial):
        invm = None
        hk = state.kernel_radius
        lo = pos.min(0) - hk
        hi = pos.max(0) + hk
        lambdas = np.zeros(len(pos))
        densities = np.zeros(len(pos))
        buf = np.empty_like(pos)
        for _ in range(iterations):
            grid = HashGrid(pos, hk, lo, hi)
            _pbf_lambdas(pos, state.masses, state.rest_density, hk, grid.origin,
                         1.0 / grid.cell_size, grid.nx, grid.ny, grid.nz,
                         grid.cell_start, grid.point_idx, lambdas, densities)
            _pbf_apply(pos, buf, state.rest_density, hk, grid.origin, 1.0 / grid.cell_size,
                       grid.nx, grid.ny, grid.nz, grid.cell_start, grid.point_idx, lambdas, 1.0)
            pos[:] = buf
        _finalize(pos, vel, prev, 1.0 / dt_sub)
        grid = HashGrid(pos, hk, lo, hi)
        _pbf_lambdas(pos, state.masses, state.rest_density, hk, grid.origin,
                     1.0 / grid.cell_size, grid.nx, grid.ny, grid.nz,
                     grid.cell_start, grid.point_idx, lambdas, densities)
        _xsph(pos, vel, buf, state.masses, densities, hk, material.viscosity_coefficient,
              grid.origin, 1.0 / grid.cell_size, grid.nx, grid.ny, grid.nz,
              grid.cell_start, grid.point_idx)
        vel[:] = buf
        return

    invm = 1.0 / state.masses
    if isinstance(material, ElasticMaterial):
        params = (
            (state.edges, state.rest_lengths, material.stretch_compliance, material.stretch_relaxation),
            (state.bend_pairs, state.rest_bend, material.bending_compliance, material.bending_relaxation),
        )
        vol = (state.tets, state.rest_volumes, material.volume_compliance, material.volume_relaxation)
    else:  # cloth
        params = (
            (state.edges, state.rest_lengths, material.stretch_compliance, 1.0),
            (state.bend_pairs, state.rest_bend, material.bending_compliance, 1.0),
        )
        vol = None
    lams = [np.zeros(len(p[0])) for p in params]
    lam_vol = np.zeros(len(vol[0])) if vol is not None else None
    for _ in range(iterations):
        for (pairs, rest, compliance, relax), lam in zip(params, lams):
            if len(pairs):
                _distance_sweep(pos, invm, pairs, rest, lam, compliance * inv_dt2, relax)
        if vol is not None and len(vol[0]):
            _volume_sweep(pos, invm, vol[0], vol[1], lam_vol, vol[2] * inv_dt2, vol[3])
    _finalize(pos, vel, prev, 1.0 / dt_sub)


def pbd_substep(obj: DynamicObject, dt_sub: float, accel: np.ndarray,
                iterations: int = 10) -> DynamicObject:
    """Spec-surface wrapper: one PBD substep on a copy of the object."""
    if not isinstance(obj.solver_state, PbdState):
        raise DegenerateObject("pbd_substep needs PbdState solver state (missing topology)")
    st = obj.solver_state
    if not isinstance(obj.material, SmokeMaterial) and len(st.edges) == 0:
        raise DegenerateObject("pbd object has no constraint topology")
    out = obj.copy()
    accel = np.broadcast_to(np.asarray(accel, np.float64), (obj.count, 3)).copy()
    prev = np.empty_like(out.positions)
    pbd_substep_arrays(out.positions, out.velocities, prev, out.solver_state,
                       out.material, accel, dt_sub, iterations)
    return out
