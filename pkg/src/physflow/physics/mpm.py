"""Material point method for liquid and granular materials.

APIC transfers with quadratic B-spline weights in the fused MLS form: the
per-particle Kirchhoff stress is folded into the affine matrix scattered to the
grid. Liquid uses fixed-corotated elasticity; granular adds a Drucker-Prager
return mapping on the Hencky strain of the deformation gradient, which is what
produces a finite repose angle.

The particle-to-grid scatter runs single threaded in a fixed particle order;
grid update and grid-to-particle are embarrassingly parallel gathers. The
whole substep is therefore bit-reproducible regardless of thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from ..errors import DegenerateObject
from ..scene import DynamicObject, GranularMaterial, LiquidMaterial, MpmState
from ._linalg import svd3

_BORDER = 2  # grid cells reserved as domain walls

KIND_LIQUID = 0
KIND_GRANULAR = 1


def lame_parameters(youngs_modulus: float, poissons_ratio: float) -> tuple[float, float]:
    mu = youngs_modulus / (2.0 * (1.0 + poissons_ratio))
    lam = youngs_modulus * poissons_ratio / ((1.0 + poissons_ratio) * (1.0 - 2.0 * poissons_ratio))
    return mu, lam


def drucker_prager_alpha(friction_angle_deg: float) -> float:
    sin_phi = np.sin(np.radians(friction_angle_deg))
    return np.sqrt(2.0 / 3.0) * 2.0 * sin_phi / (3.0 - sin_phi)


class MpmGrid:
    """Background grid: bounds fixed at construction (scene AABB + 10%)."""

    def __init__(self, lo, hi, cells_per_meter: float, max_dim: int = 64):
        lo = np.asarray(lo, np.float64)
        hi = np.asarray(hi, np.float64)
        center = 0.5 * (lo + hi)
        half = np.maximum(0.55 * (hi - lo), 0.05)  # 10% dilation
        lo = center - half
        hi = center + half
        dx = 1.0 / cells_per_meter
        dims = np.ceil((hi - lo) / dx).astype(np.int64) + 2 * _BORDER + 1
        if dims.max() > max_dim:
            dx = float((hi - lo).max()) / (max_dim - 2 * _BORDER - 1)
            dims = np.ceil((hi - lo) / dx).astype(np.int64) + 2 * _BORDER + 1
        self.dx = float(dx)
        self.origin = lo - _BORDER * dx
        self.nx, self.ny, self.nz = (int(d) for d in dims)
        n = self.nx * self.ny * self.nz
        self.mass = np.zeros(n, np.float64)
        self.momentum = np.zeros((n, 3), np.float64)
        self.collider_mask = np.zeros(n, np.uint8)
        self.collider_normal = np.zeros((n, 3), np.float64)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.nx, self.ny, self.nz

    def add_colliders(self, points: np.ndarray) -> None:
        """Mark grid nodes adjacent to static points and estimate their normals."""
        if len(points) == 0:
            return
        _mark_colliders(points, self.origin, self.dx, self.nx, self.ny, self.nz,
                        self.collider_mask, self.collider_normal)
        norms = np.linalg.norm(self.collider_normal, axis=1)
        ok = norms > 1e-12
        self.collider_normal[ok] /= norms[ok, None]
        # nodes buried with no consistent direction act as sticky
        self.collider_normal[~ok & (self.collider_mask > 0)] = 0.0


@njit(cache=True)
def _mark_colliders(points, origin, dx, nx, ny, nz, mask, normal):
    # only the 8 nodes of the containing cell: a thicker shell would push
    # resting material a full cell away from the surface
    inv_dx = 1.0 / dx
    for p in range(points.shape[0]):
        px = (points[p, 0] - origin[0]) * inv_dx
        py = (points[p, 1] - origin[1]) * inv_dx
        pz = (points[p, 2] - origin[2]) * inv_dx
        bx = int(np.floor(px)); by = int(np.floor(py)); bz = int(np.floor(pz))
        for ii in range(2):
            i = bx + ii
            if i < 0 or i >= nx:
                continue
            for jj in range(2):
                j = by + jj
                if j < 0 or j >= ny:
                    continue
                for kk in range(2):
                    k = bz + kk
                    if k < 0 or k >= nz:
                        continue
                    node = (i * ny + j) * nz + k
                    mask[node] = 1
                    normal[node, 0] += i - px
                    normal[node, 1] += j - py
                    normal[node, 2] += k - pz


@njit(cache=True, parallel=True, fastmath=True)
def _kick_and_stress(pos, vel, F, volumes, accel, gx, gy, gz, dt, mu, lam,
                     kind, alpha_dp, coef, stress):
    for p in prange(pos.shape[0]):
        vel[p, 0] += (gx + accel[p, 0]) * dt
        vel[p, 1] += (gy + accel[p, 1]) * dt
        vel[p, 2] += (gz + accel[p, 2]) * dt
        f00 = F[p, 0, 0]; f01 = F[p, 0, 1]; f02 = F[p, 0, 2]
        f10 = F[p, 1, 0]; f11 = F[p, 1, 1]; f12 = F[p, 1, 2]
        f20 = F[p, 2, 0]; f21 = F[p, 2, 1]; f22 = F[p, 2, 2]
        (u00, u01, u02, u10, u11, u12, u20, u21, u22, s0, s1, s2,
         v00, v01, v02, v10, v11, v12, v20, v21, v22) = svd3(
            f00, f01, f02, f10, f11, f12, f20, f21, f22)
        c = coef * volumes[p]
        if kind == KIND_GRANULAR:
            # Hencky strain with the plastic return mapping
            s0 = max(s0, 1e-6); s1 = max(s1, 1e-6); s2 = max(s2, 1e-6)
            e0 = np.log(s0); e1 = np.log(s1); e2 = np.log(s2)
            tr = e0 + e1 + e2
            h0 = e0 - tr / 3.0; h1 = e1 - tr / 3.0; h2 = e2 - tr / 3.0
            hn = np.sqrt(h0 * h0 + h1 * h1 + h2 * h2)
            if tr > 0.0 or hn < 1e-14:
                e0 = 0.0; e1 = 0.0; e2 = 0.0  # project to the cone tip
            else:
                dg = hn + alpha_dp * tr * (3.0 * lam + 2.0 * mu) / (2.0 * mu)
                if dg > 0.0:
                    s = dg / hn
                    e0 -= s * h0; e1 -= s * h1; e2 -= s * h2
            ns0 = np.exp(e0); ns1 = np.exp(e1); ns2 = np.exp(e2)
            # F = U diag(ns) V^T
            F[p, 0, 0] = u00 * ns0 * v00 + u01 * ns1 * v01 + u02 * ns2 * v02
            F[p, 0, 1] = u00 * ns0 * v10 + u01 * ns1 * v11 + u02 * ns2 * v12
            F[p, 0, 2] = u00 * ns0 * v20 + u01 * ns1 * v21 + u02 * ns2 * v22
            F[p, 1, 0] = u10 * ns0 * v00 + u11 * ns1 * v01 + u12 * ns2 * v02
            F[p, 1, 1] = u10 * ns0 * v10 + u11 * ns1 * v11 + u12 * ns2 * v12
            F[p, 1, 2] = u10 * ns0 * v20 + u11 * ns1 * v21 + u12 * ns2 * v22
            F[p, 2, 0] = u20 * ns0 * v00 + u21 * ns1 * v01 + u22 * ns2 * v02
            F[p, 2, 1] = u20 * ns0 * v10 + u21 * ns1 * v11 + u22 * ns2 * v12
            F[p, 2, 2] = u20 * ns0 * v20 + u21 * ns1 * v21 + u22 * ns2 * v22
            # Kirchhoff stress tau = U diag(2 mu e + lam tr(e)) U^T
            tre = e0 + e1 + e2
            d0 = 2.0 * mu * e0 + lam * tre
            d1 = 2.0 * mu * e1 + lam * tre
            d2 = 2.0 * mu * e2 + lam * tre
            stress[p, 0, 0] = c * (u00 * d0 * u00 + u01 * d1 * u01 + u02 * d2 * u02)
            stress[p, 0, 1] = c * (u00 * d0 * u10 + u01 * d1 * u11 + u02 * d2 * u12)
            stress[p, 0, 2] = c * (u00 * d0 * u20 + u01 * d1 * u21 + u02 * d2 * u22)
            stress[p, 1, 0] = c * (u10 * d0 * u00 + u11 * d1 * u01 + u12 * d2 * u02)
            stress[p, 1, 1] = c * (u10 * d0 * u10 + u11 * d1 * u11 + u12 * d2 * u12)
            stress[p, 1, 2] = c * (u10 * d0 * u20 + u11 * d1 * u21 + u12 * d2 * u22)
            stress[p, 2, 0] = c * (u20 * d0 * u00 + u21 * d1 * u01 + u22 * d2 * u02)
            stress[p, 2, 1] = c * (u20 * d0 * u10 + u21 * d1 * u11 + u22 * d2 * u12)
            stress[p, 2, 2] = c * (u20 * d0 * u20 + u21 * d1 * u21 + u22 * d2 * u22)
        else:
            # fixed corotated: tau = 2 mu (F - R) F^T + lam J (J - 1) I
            r00 = u00 * v00 + u01 * v01 + u02 * v02
            r01 = u00 * v10 + u01 * v11 + u02 * v12
            r02 = u00 * v20 + u01 * v21 + u02 * v22
            r10 = u10 * v00 + u11 * v01 + u12 * v02
            r11 = u10 * v10 + u11 * v11 + u12 * v12
            r12 = u10 * v20 + u11 * v21 + u12 * v22
            r20 = u20 * v00 + u21 * v01 + u22 * v02
            r21 = u20 * v10 + u21 * v11 + u22 * v12
            r22 = u20 * v20 + u21 * v21 + u22 * v22
            jdet = s0 * s1 * s2
            two_mu = 2.0 * mu
            d00 = f00 - r00; d01 = f01 - r01; d02 = f02 - r02
            d10 = f10 - r10; d11 = f11 - r11; d12 = f12 - r12
            d20 = f20 - r20; d21 = f21 - r21; d22 = f22 - r22
            lj = lam * jdet * (jdet - 1.0)
            stress[p, 0, 0] = c * (two_mu * (d00 * f00 + d01 * f01 + d02 * f02) + lj)
            stress[p, 0, 1] = c * (two_mu * (d00 * f10 + d01 * f11 + d02 * f12))
            stress[p, 0, 2] = c * (two_mu * (d00 * f20 + d01 * f21 + d02 * f22))
            stress[p, 1, 0] = c * (two_mu * (d10 * f00 + d11 * f01 + d12 * f02))
            stress[p, 1, 1] = c * (two_mu * (d10 * f10 + d11 * f11 + d12 * f12) + lj)
            stress[p, 1, 2] = c * (two_mu * (d10 * f20 + d11 * f21 + d12 * f22))
            stress[p, 2, 0] = c * (two_mu * (d20 * f00 + d21 * f01 + d22 * f02))
            stress[p, 2, 1] = c * (two_mu * (d20 * f10 + d21 * f11 + d22 * f12))
            stress[p, 2, 2] = c * (two_mu * (d20 * f20 + d21 * f21 + d22 * f22) + lj)


@njit(cache=True, fastmath=True)
def _p2g(pos, vel, Cs, stress, masses, origin, inv_dx, dx, ny, nz, g_mass, g_mom, order):
    for s_ in range(order.shape[0]):
        p = order[s_]
        px = (pos[p, 0] - origin[0]) * inv_dx
        py = (pos[p, 1] - origin[1]) * inv_dx
        pz = (pos[p, 2] - origin[2]) * inv_dx
        bx = int(np.floor(px - 0.5)); by = int(np.floor(py - 0.5)); bz = int(np.floor(pz - 0.5))
        fx = px - bx; fy = py - by; fz = pz - bz
        wx0 = 0.5 * (1.5 - fx) ** 2; wx1 = 0.75 - (fx - 1.0) ** 2; wx2 = 0.5 * (fx - 0.5) ** 2
        wy0 = 0.5 * (1.5 - fy) ** 2; wy1 = 0.75 - (fy - 1.0) ** 2; wy2 = 0.5 * (fy - 0.5) ** 2
        wz0 = 0.5 * (1.5 - fz) ** 2; wz1 = 0.75 - (fz - 1.0) ** 2; wz2 = 0.5 * (fz - 0.5) ** 2
        m = masses[p]
        vx = vel[p, 0]; vy = vel[p, 1]; vz = vel[p, 2]
        a00 = m * Cs[p, 0, 0] + stress[p, 0, 0]
        a01 = m * Cs[p, 0, 1] + stress[p, 0, 1]
        a02 = m * Cs[p, 0, 2] + stress[p, 0, 2]
        a10 = m * Cs[p, 1, 0] + stress[p, 1, 0]
        a11 = m * Cs[p, 1, 1] + stress[p, 1, 1]
        a12 = m * Cs[p, 1, 2] + stress[p, 1, 2]
        a20 = m * Cs[p, 2, 0] + stress[p, 2, 0]
        a21 = m * Cs[p, 2, 1] + stress[p, 2, 1]
        a22 = m * Cs[p, 2, 2] + stress[p, 2, 2]
        for ii in range(3):
            wx = wx0 if ii == 0 else (wx1 if ii == 1 else wx2)
            ddx = (ii - fx) * dx
            for jj in range(3):
                wxy = wx * (wy0 if jj == 0 else (wy1 if jj == 1 else wy2))
                ddy = (jj - fy) * dx
                nbase = ((bx + ii) * ny + (by + jj)) * nz + bz
                for kk in range(3):
                    w = wxy * (wz0 if kk == 0 else (wz1 if kk == 1 else wz2))
                    ddz = (kk - fz) * dx
                    node = nbase + kk
                    g_mass[node] += w * m
                    g_mom[node, 0] += w * (m * vx + a00 * ddx + a01 * ddy + a02 * ddz)
                    g_mom[node, 1] += w * (m * vy + a10 * ddx + a11 * ddy + a12 * ddz)
                    g_mom[node, 2] += w * (m * vz + a20 * ddx + a21 * ddy + a22 * ddz)


@njit(cache=True, parallel=True)
def _grid_update(g_mass, g_mom, mask, normal, mu_bc, nx, ny, nz,
                 lo_x, lo_y, lo_z, hi_x, hi_y, hi_z, border):
    span_y = hi_y - lo_y
    span_z = hi_z - lo_z
    total = (hi_x - lo_x) * span_y * span_z
    for t in prange(total):
        i = lo_x + t // (span_y * span_z)
        j = lo_y + (t // span_z) % span_y
        k = lo_z + t % span_z
        node = (i * ny + j) * nz + k
        m = g_mass[node]
        if m <= 0.0:
            g_mom[node, 0] = 0.0; g_mom[node, 1] = 0.0; g_mom[node, 2] = 0.0
            continue
        vx = g_mom[node, 0] / m
        vy = g_mom[node, 1] / m
        vz = g_mom[node, 2] / m
        # domain walls
        if i < border and vx < 0.0:
            vx = 0.0
        if i >= nx - border and vx > 0.0:
            vx = 0.0
        if j < border and vy < 0.0:
            vy = 0.0
        if j >= ny - border and vy > 0.0:
            vy = 0.0
        if k < border and vz < 0.0:
            vz = 0.0
        if k >= nz - border and vz > 0.0:
            vz = 0.0
        if mask[node] != 0:
            nxv = normal[node, 0]; nyv = normal[node, 1]; nzv = normal[node, 2]
            if nxv == 0.0 and nyv == 0.0 and nzv == 0.0:
                vx = 0.0; vy = 0.0; vz = 0.0  # buried node: sticky
            else:
                vn = vx * nxv + vy * nyv + vz * nzv
                if vn < 0.0:
                    vx -= vn * nxv; vy -= vn * nyv; vz -= vn * nzv
                    tmag = np.sqrt(vx * vx + vy * vy + vz * vz)
                    if tmag > 1e-12:
                        s = max(0.0, 1.0 - mu_bc * (-vn) / tmag)
                        vx *= s; vy *= s; vz *= s
        g_mom[node, 0] = vx; g_mom[node, 1] = vy; g_mom[node, 2] = vz


@njit(cache=True, parallel=True, fastmath=True)
def _g2p(pos, vel, Cs, F, g_v, origin, inv_dx, dx, ny, nz, dt,
         clamp_lo_x, clamp_lo_y, clamp_lo_z, clamp_hi_x, clamp_hi_y, clamp_hi_z, escaped, order):
    for s_ in prange(order.shape[0]):
        p = order[s_]
        px = (pos[p, 0] - origin[0]) * inv_dx
        py = (pos[p, 1] - origin[1]) * inv_dx
        pz = (pos[p, 2] - origin[2]) * inv_dx
        bx = int(np.floor(px - 0.5)); by = int(np.floor(py - 0.5)); bz = int(np.floor(pz - 0.5))
        fx = px - bx; fy = py - by; fz = pz - bz
        wx0 = 0.5 * (1.5 - fx) ** 2; wx1 = 0.75 - (fx - 1.0) ** 2; wx2 = 0.5 * (fx - 0.5) ** 2
        wy0 = 0.5 * (1.5 - fy) ** 2; wy1 = 0.75 - (fy - 1.0) ** 2; wy2 = 0.5 * (fy - 0.5) ** 2
        wz0 = 0.5 * (1.5 - fz) ** 2; wz1 = 0.75 - (fz - 1.0) ** 2; wz2 = 0.5 * (fz - 0.5) ** 2
        vx = 0.0; vy = 0.0; vz = 0.0
        c00 = 0.0; c01 = 0.0; c02 = 0.0
        c10 = 0.0; c11 = 0.0; c12 = 0.0
        c20 = 0.0; c21 = 0.0; c22 = 0.0
        for ii in range(3):
            wx = wx0 if ii == 0 else (wx1 if ii == 1 else wx2)
            ddx = (ii - fx) * dx
            for jj in range(3):
                wxy = wx * (wy0 if jj == 0 else (wy1 if jj == 1 else wy2))
                ddy = (jj - fy) * dx
                nbase = ((bx + ii) * ny + (by + jj)) * nz + bz
                for kk in range(3):
                    w = wxy * (wz0 if kk == 0 else (wz1 if kk == 1 else wz2))
                    ddz = (kk - fz) * dx
                    node = nbase + kk
                    gvx = g_v[node, 0]; gvy = g_v[node, 1]; gvz = g_v[node, 2]
                    vx += w * gvx; vy += w * gvy; vz += w * gvz
                    c00 += w * gvx * ddx; c01 += w * gvx * ddy; c02 += w * gvx * ddz
                    c10 += w * gvy * ddx; c11 += w * gvy * ddy; c12 += w * gvy * ddz
                    c20 += w * gvz * ddx; c21 += w * gvz * ddy; c22 += w * gvz * ddz
        s = 4.0 * inv_dx * inv_dx
        c00 *= s; c01 *= s; c02 *= s
        c10 *= s; c11 *= s; c12 *= s
        c20 *= s; c21 *= s; c22 *= s
        vel[p, 0] = vx; vel[p, 1] = vy; vel[p, 2] = vz
        Cs[p, 0, 0] = c00; Cs[p, 0, 1] = c01; Cs[p, 0, 2] = c02
        Cs[p, 1, 0] = c10; Cs[p, 1, 1] = c11; Cs[p, 1, 2] = c12
        Cs[p, 2, 0] = c20; Cs[p, 2, 1] = c21; Cs[p, 2, 2] = c22
        nx_ = pos[p, 0] + dt * vx
        ny_ = pos[p, 1] + dt * vy
        nz_ = pos[p, 2] + dt * vz
        esc = 0
        if nx_ < clamp_lo_x:
            nx_ = clamp_lo_x; esc = 1
        elif nx_ > clamp_hi_x:
            nx_ = clamp_hi_x; esc = 1
        if ny_ < clamp_lo_y:
            ny_ = clamp_lo_y; esc = 1
        elif ny_ > clamp_hi_y:
            ny_ = clamp_hi_y; esc = 1
        if nz_ < clamp_lo_z:
            nz_ = clamp_lo_z; esc = 1
        elif nz_ > clamp_hi_z:
            nz_ = clamp_hi_z; esc = 1
        escaped[p] = esc
        pos[p, 0] = nx_; pos[p, 1] = ny_; pos[p, 2] = nz_
        # deformation gradient update: F <- (I + dt C) F
        f00 = F[p, 0, 0]; f01 = F[p, 0, 1]; f02 = F[p, 0, 2]
        f10 = F[p, 1, 0]; f11 = F[p, 1, 1]; f12 = F[p, 1, 2]
        f20 = F[p, 2, 0]; f21 = F[p, 2, 1]; f22 = F[p, 2, 2]
        g00 = 1.0 + dt * c00; g01 = dt * c01; g02 = dt * c02
        g10 = dt * c10; g11 = 1.0 + dt * c11; g12 = dt * c12
        g20 = dt * c20; g21 = dt * c21; g22 = 1.0 + dt * c22
        F[p, 0, 0] = g00 * f00 + g01 * f10 + g02 * f20
        F[p, 0, 1] = g00 * f01 + g01 * f11 + g02 * f21
        F[p, 0, 2] = g00 * f02 + g01 * f12 + g02 * f22
        F[p, 1, 0] = g10 * f00 + g11 * f10 + g12 * f20
        F[p, 1, 1] = g10 * f01 + g11 * f11 + g12 * f21
        F[p, 1, 2] = g10 * f02 + g11 * f12 + g12 * f22
        F[p, 2, 0] = g20 * f00 + g21 * f10 + g22 * f20
        F[p, 2, 1] = g20 * f01 + g21 * f11 + g22 * f21
        F[p, 2, 2] = g20 * f02 + g21 * f12 + g22 * f22


def mpm_substep_arrays(pos, vel, state: MpmState, material, grid: MpmGrid,
                       accel, gravity, dt_sub: float, stress_scratch=None,
                       mu_bc: float = 0.4, order=None) -> int:
    """One MPM substep in place; returns the number of clamped particles.

    ``order`` is a spatially sorted particle permutation (cache locality for
    the grid transfers); identity order is used when absent.
    """
    if order is None:
        order = np.arange(len(pos), dtype=np.int64)
    if isinstance(material, GranularMaterial):
        kind = KIND_GRANULAR
        alpha_dp = drucker_prager_alpha(material.friction_angle)
    else:
        kind = KIND_LIQUID
        alpha_dp = 0.0
    mu, lam = lame_parameters(material.youngs_modulus, material.poissons_ratio)
    stress = stress_scratch if stress_scratch is not None else np.empty_like(state.F)
    coef = -dt_sub * 4.0 / (grid.dx * grid.dx)
    _kick_and_stress(pos, vel, state.F, state.volumes, accel,
                     gravity[0], gravity[1], gravity[2], dt_sub, mu, lam,
                     kind, alpha_dp, coef, stress)

    # zero + update only the grid sub-box around the particles
    inv_dx = 1.0 / grid.dx
    lo_cell = np.floor((pos.min(0) - grid.origin) * inv_dx).astype(np.int64) - 2
    hi_cell = np.ceil((pos.max(0) - grid.origin) * inv_dx).astype(np.int64) + 3
    lo_cell = np.maximum(lo_cell, 0)
    hi_cell = np.minimum(hi_cell, np.array([grid.nx, grid.ny, grid.nz]))
    m3 = grid.mass.reshape(grid.nx, grid.ny, grid.nz)
    mm3 = grid.momentum.reshape(grid.nx, grid.ny, grid.nz, 3)
    sl = (slice(lo_cell[0], hi_cell[0]), slice(lo_cell[1], hi_cell[1]), slice(lo_cell[2], hi_cell[2]))
    m3[sl] = 0.0
    mm3[sl] = 0.0

    _p2g(pos, vel, state.C, stress, state.masses, grid.origin, inv_dx, grid.dx,
         grid.ny, grid.nz, grid.mass, grid.momentum, order)
    _grid_update(grid.mass, grid.momentum, grid.collider_mask, grid.collider_normal,
                 mu_bc, grid.nx, grid.ny, grid.nz,
                 int(lo_cell[0]), int(lo_cell[1]), int(lo_cell[2]),
                 int(hi_cell[0]), int(hi_cell[1]), int(hi_cell[2]), _BORDER)

    clamp_lo = grid.origin + (_BORDER - 0.5) * grid.dx
    clamp_hi = grid.origin + (np.array([grid.nx, grid.ny, grid.nz]) - _BORDER - 0.5) * grid.dx
    escaped = np.empty(len(pos), np.uint8)
    _g2p(pos, vel, state.C, state.F, grid.momentum, grid.origin, inv_dx, grid.dx,
         grid.ny, grid.nz, dt_sub,
         clamp_lo[0], clamp_lo[1], clamp_lo[2], clamp_hi[0], clamp_hi[1], clamp_hi[2],
         escaped, order)
    return int(escaped.sum())


def mpm_substep(obj: DynamicObject, grid: MpmGrid, dt_sub: float, accel,
                gravity=(0.0, 0.0, 0.0)) -> DynamicObject:
    """Spec-surface wrapper: one MPM substep on a copy of the object."""
    if not isinstance(obj.solver_state, MpmState):
        raise DegenerateObject("mpm_substep needs MpmState solver state")
    if not isinstance(obj.material, (LiquidMaterial, GranularMaterial)):
        raise DegenerateObject("mpm_substep expects a liquid or granular material")
    out = obj.copy()
    accel = np.broadcast_to(np.asarray(accel, np.float64), (obj.count, 3)).copy()
    mpm_substep_arrays(out.positions, out.velocities, out.solver_state, out.material,
                       grid, accel, np.asarray(gravity, np.float64), dt_sub)
    return out


@njit(cache=True)
def _cell_keys(pos, origin, inv_dx, ny, nz, keys):
    for p in range(pos.shape[0]):
        i = int((pos[p, 0] - origin[0]) * inv_dx)
        j = int((pos[p, 1] - origin[1]) * inv_dx)
        k = int((pos[p, 2] - origin[2]) * inv_dx)
        keys[p] = (i * ny + j) * nz + k


def spatial_order(pos, grid: MpmGrid, keys_buf=None) -> np.ndarray:
    """Stable particle permutation sorted by grid cell, for transfer locality."""
    keys = keys_buf if keys_buf is not None and len(keys_buf) == len(pos) \
        else np.empty(len(pos), np.int64)
    _cell_keys(pos, grid.origin, 1.0 / grid.dx, grid.ny, grid.nz, keys)
    return np.argsort(keys, kind="stable")
