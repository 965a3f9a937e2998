"""Particle contact resolution: spatial-hash queries against the static
background, dynamic-dynamic cross-object contacts, and kinematic box colliders.

Contacts are resolved by projecting positions to a separation of one particle
size ``h`` with Coulomb friction; dynamic-dynamic pairs split the correction by
inverse mass so momentum is exchanged symmetrically. All kernels are gather
style (every particle computes its own correction), which keeps results
independent of thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

# Cap on dense hash-grid cells; the cell size grows past this (memory guard).
_MAX_CELLS = 4_000_000


@njit(cache=True)
def _count_cells(points, origin, inv_cell, nx, ny, nz, counts):
    for p in range(points.shape[0]):
        i = int((points[p, 0] - origin[0]) * inv_cell)
        j = int((points[p, 1] - origin[1]) * inv_cell)
        k = int((points[p, 2] - origin[2]) * inv_cell)
        if 0 <= i < nx and 0 <= j < ny and 0 <= k < nz:
            counts[(i * ny + j) * nz + k] += 1


@njit(cache=True)
def _fill_cells(points, origin, inv_cell, nx, ny, nz, cursor, point_idx):
    for p in range(points.shape[0]):
        i = int((points[p, 0] - origin[0]) * inv_cell)
        j = int((points[p, 1] - origin[1]) * inv_cell)
        k = int((points[p, 2] - origin[2]) * inv_cell)
        if 0 <= i < nx and 0 <= j < ny and 0 <= k < nz:
            c = (i * ny + j) * nz + k
            point_idx[cursor[c]] = p
            cursor[c] += 1


@njit(cache=True)
def _dilate_occupancy(counts, nx, ny, nz, occ):
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if counts[(i * ny + j) * nz + k] > 0:
                    for di in range(max(0, i - 1), min(nx, i + 2)):
                        for dj in range(max(0, j - 1), min(ny, j + 2)):
                            for dk in range(max(0, k - 1), min(nz, k + 2)):
                                occ[(di * ny + dj) * nz + dk] = 1


@njit(cache=True)
def _neighborhood_counts(nx, ny, nz, occ, cell_start, counts_out):
    for c in range(nx * ny * nz):
        counts_out[c] = 0
        if occ[c] == 0:
            continue
        k = c % nz
        j = (c // nz) % ny
        i = c // (ny * nz)
        total = 0
        for ii in range(max(0, i - 1), min(nx, i + 2)):
            for jj in range(max(0, j - 1), min(ny, j + 2)):
                for kk in range(max(0, k - 1), min(nz, k + 2)):
                    cc = (ii * ny + jj) * nz + kk
                    total += cell_start[cc + 1] - cell_start[cc]
        counts_out[c] = total


@njit(cache=True)
def _neighborhood_fill(nx, ny, nz, occ, cell_start, point_idx, nbr_start, nbr_idx):
    for c in range(nx * ny * nz):
        if occ[c] == 0:
            continue
        k = c % nz
        j = (c // nz) % ny
        i = c // (ny * nz)
        w = nbr_start[c]
        for ii in range(max(0, i - 1), min(nx, i + 2)):
            for jj in range(max(0, j - 1), min(ny, j + 2)):
                for kk in range(max(0, k - 1), min(nz, k + 2)):
                    cc = (ii * ny + jj) * nz + kk
                    for s in range(cell_start[cc], cell_start[cc + 1]):
                        nbr_idx[w] = point_idx[s]
                        w += 1


class HashGrid:
    """Dense-cell CSR index over a point set, restricted to a bounding region."""

    def __init__(self, points: np.ndarray, cell_size: float, lo: np.ndarray, hi: np.ndarray):
        lo = np.asarray(lo, np.float64)
        hi = np.asarray(hi, np.float64)
        extent = np.maximum(hi - lo, cell_size)
        dims = np.ceil(extent / cell_size).astype(np.int64) + 2
        while int(dims.prod()) > _MAX_CELLS:
            cell_size *= 1.5
            dims = np.ceil(extent / cell_size).astype(np.int64) + 2
        self.cell_size = float(cell_size)
        self.origin = lo - cell_size
        self.nx, self.ny, self.nz = (int(d) for d in dims)
        ncells = self.nx * self.ny * self.nz
        counts = np.zeros(ncells, np.int64)
        _count_cells(points, self.origin, 1.0 / self.cell_size, self.nx, self.ny, self.nz, counts)
        self.cell_start = np.zeros(ncells + 1, np.int64)
        np.cumsum(counts, out=self.cell_start[1:])
        self.point_idx = np.empty(int(self.cell_start[-1]), np.int64)
        cursor = self.cell_start[:-1].copy()
        _fill_cells(points, self.origin, 1.0 / self.cell_size, self.nx, self.ny, self.nz, cursor, self.point_idx)
        self.occupancy = np.zeros(ncells, np.uint8)
        _dilate_occupancy(counts, self.nx, self.ny, self.nz, self.occupancy)
        self.points = points
        self.zero_vel = np.zeros((0, 3), np.float64)  # lazily sized for static use
        self.nbr_start: np.ndarray | None = None  # per-cell merged 27-neighborhood
        self.nbr_idx: np.ndarray | None = None

    def build_neighborhoods(self) -> None:
        """Flatten each cell's 27-neighborhood point list so a static-collider
        query is one range lookup instead of a 27-cell scan."""
        if self.nbr_start is not None:
            return
        ncells = self.nx * self.ny * self.nz
        counts = np.empty(ncells, np.int64)
        _neighborhood_counts(self.nx, self.ny, self.nz, self.occupancy,
                             self.cell_start, counts)
        self.nbr_start = np.zeros(ncells + 1, np.int64)
        np.cumsum(counts, out=self.nbr_start[1:])
        self.nbr_idx = np.empty(int(self.nbr_start[-1]), np.int32)
        _neighborhood_fill(self.nx, self.ny, self.nz, self.occupancy,
                           self.cell_start, self.point_idx, self.nbr_start, self.nbr_idx)


@njit(cache=True, parallel=True)
def _collide_points(pos, vel, other_pos, other_vel, other_invm, invm, h, mu, inv_dt,
                    origin, inv_cell, nx, ny, nz, cell_start, point_idx, occ, symmetric):
    """Project ``pos`` out of contacts with points indexed by the CSR grid.

    symmetric=0: other side is static (full correction on this side).
    symmetric=1: split by inverse mass; relative normal velocity is absorbed.
    """
    h2 = h * h
    for p in prange(pos.shape[0]):
        px = pos[p, 0]; py = pos[p, 1]; pz = pos[p, 2]
        ci = int((px - origin[0]) * inv_cell)
        cj = int((py - origin[1]) * inv_cell)
        ck = int((pz - origin[2]) * inv_cell)
        if ci < 0 or ci >= nx or cj < 0 or cj >= ny or ck < 0 or ck >= nz:
            continue
        if occ[(ci * ny + cj) * nz + ck] == 0:
            continue
        dx_acc = 0.0; dy_acc = 0.0; dz_acc = 0.0
        wp = invm[p] if symmetric == 1 else 1.0
        for i in range(max(0, ci - 1), min(nx, ci + 2)):
            for j in range(max(0, cj - 1), min(ny, cj + 2)):
                for k in range(max(0, ck - 1), min(nz, ck + 2)):
                    c = (i * ny + j) * nz + k
                    for s in range(cell_start[c], cell_start[c + 1]):
                        q = point_idx[s]
                        qx = other_pos[q, 0]; qy = other_pos[q, 1]; qz = other_pos[q, 2]
                        dx = (px + dx_acc) - qx
                        dy = (py + dy_acc) - qy
                        dz = (pz + dz_acc) - qz
                        d2 = dx * dx + dy * dy + dz * dz
                        if d2 >= h2 or d2 < 1e-24:
                            continue
                        d = np.sqrt(d2)
                        pen = h - d
                        nxv = dx / d; nyv = dy / d; nzv = dz / d
                        if symmetric == 1:
                            wq = other_invm[q]
                            share = wp / (wp + wq) if wp + wq > 0 else 0.0
                        else:
                            share = 1.0
                        dx_acc += share * pen * nxv
                        dy_acc += share * pen * nyv
                        dz_acc += share * pen * nzv
                        # inelastic normal response on the relative velocity
                        rvx = vel[p, 0] - other_vel[q, 0]
                        rvy = vel[p, 1] - other_vel[q, 1]
                        rvz = vel[p, 2] - other_vel[q, 2]
                        vn = rvx * nxv + rvy * nyv + rvz * nzv
                        if vn < 0.0:
                            vel[p, 0] -= share * vn * nxv
                            vel[p, 1] -= share * vn * nyv
                            vel[p, 2] -= share * vn * nzv
                            # Coulomb: tangential impulse bounded by mu * normal impulse
                            tvx = rvx - vn * nxv
                            tvy = rvy - vn * nyv
                            tvz = rvz - vn * nzv
                            tmag = np.sqrt(tvx * tvx + tvy * tvy + tvz * tvz)
                            if tmag > 1e-12:
                                scale = min(1.0, mu * (-vn) / tmag) * share
                                vel[p, 0] -= scale * tvx
                                vel[p, 1] -= scale * tvy
                                vel[p, 2] -= scale * tvz
        if dx_acc != 0.0 or dy_acc != 0.0 or dz_acc != 0.0:
            pos[p, 0] = px + dx_acc
            pos[p, 1] = py + dy_acc
            pos[p, 2] = pz + dz_acc


@njit(cache=True, parallel=True)
def _collide_boxes(pos, vel, h, centers, rots, halves, linvel, angvel, mu, inv_dt):
    """One-way contact against oriented boxes (infinite effective mass)."""
    nb = centers.shape[0]
    for p in prange(pos.shape[0]):
        for b in range(nb):
            rx = pos[p, 0] - centers[b, 0]
            ry = pos[p, 1] - centers[b, 1]
            rz = pos[p, 2] - centers[b, 2]
            # local = R^T r  (rows of R are world axes of the box frame transposed)
            lx = rots[b, 0, 0] * rx + rots[b, 1, 0] * ry + rots[b, 2, 0] * rz
            ly = rots[b, 0, 1] * rx + rots[b, 1, 1] * ry + rots[b, 2, 1] * rz
            lz = rots[b, 0, 2] * rx + rots[b, 1, 2] * ry + rots[b, 2, 2] * rz
            ex = halves[b, 0] + 0.5 * h
            ey = halves[b, 1] + 0.5 * h
            ez = halves[b, 2] + 0.5 * h
            dx = ex - abs(lx)
            dy = ey - abs(ly)
            dz = ez - abs(lz)
            if dx <= 0.0 or dy <= 0.0 or dz <= 0.0:
                continue
            # push out along the axis of least penetration
            if dx <= dy and dx <= dz:
                ax, pen = 0, dx
                sgn = 1.0 if lx >= 0 else -1.0
            elif dy <= dz:
                ax, pen = 1, dy
                sgn = 1.0 if ly >= 0 else -1.0
            else:
                ax, pen = 2, dz
                sgn = 1.0 if lz >= 0 else -1.0
            nxv = rots[b, 0, ax] * sgn
            nyv = rots[b, 1, ax] * sgn
            nzv = rots[b, 2, ax] * sgn
            pos[p, 0] += pen * nxv
            pos[p, 1] += pen * nyv
            pos[p, 2] += pen * nzv
            # surface velocity at the contact point
            sx = linvel[b, 0] + angvel[b, 1] * rz - angvel[b, 2] * ry
            sy = linvel[b, 1] + angvel[b, 2] * rx - angvel[b, 0] * rz
            sz = linvel[b, 2] + angvel[b, 0] * ry - angvel[b, 1] * rx
            rvx = vel[p, 0] - sx
            rvy = vel[p, 1] - sy
            rvz = vel[p, 2] - sz
            vn = rvx * nxv + rvy * nyv + rvz * nzv
            if vn < 0.0:
                vel[p, 0] -= vn * nxv
                vel[p, 1] -= vn * nyv
                vel[p, 2] -= vn * nzv
            # Coulomb friction; the normal impulse includes the position push,
            # so a squeezing finger grips even without approach velocity
            jn = max(0.0, -vn) + pen * inv_dt
            tvx = rvx - vn * nxv
            tvy = rvy - vn * nyv
            tvz = rvz - vn * nzv
            tmag = np.sqrt(tvx * tvx + tvy * tvy + tvz * tvz)
            if tmag > 1e-12:
                scale = min(1.0, mu * jn / tmag)
                vel[p, 0] -= scale * tvx
                vel[p, 1] -= scale * tvy
                vel[p, 2] -= scale * tvz


_EMPTY_PTS = np.zeros((0, 3), np.float64)
_EMPTY_VEL = np.zeros((0, 3), np.float64)
_EMPTY_W = np.zeros(0, np.float64)


@njit(cache=True, parallel=True)
def _collide_static_fast(pos, vel, points, nbr_start, nbr_idx, h, mu,
                         origin, inv_cell, nx, ny, nz):
    """Project particles out of contacts with the static points listed in the
    particle's cell neighborhood (same contacts as a 27-cell scan)."""
    h2 = h * h
    for p in prange(pos.shape[0]):
        px = pos[p, 0]; py = pos[p, 1]; pz = pos[p, 2]
        ci = int((px - origin[0]) * inv_cell)
        cj = int((py - origin[1]) * inv_cell)
        ck = int((pz - origin[2]) * inv_cell)
        if ci < 0 or ci >= nx or cj < 0 or cj >= ny or ck < 0 or ck >= nz:
            continue
        c = (ci * ny + cj) * nz + ck
        lo = nbr_start[c]
        hi = nbr_start[c + 1]
        if lo == hi:
            continue
        dx_acc = 0.0; dy_acc = 0.0; dz_acc = 0.0
        for s in range(lo, hi):
            q = nbr_idx[s]
            dx = (px + dx_acc) - points[q, 0]
            dy = (py + dy_acc) - points[q, 1]
            dz = (pz + dz_acc) - points[q, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 >= h2 or d2 < 1e-24:
                continue
            d = np.sqrt(d2)
            pen = h - d
            nxv = dx / d; nyv = dy / d; nzv = dz / d
            dx_acc += pen * nxv
            dy_acc += pen * nyv
            dz_acc += pen * nzv
            vn = vel[p, 0] * nxv + vel[p, 1] * nyv + vel[p, 2] * nzv
            if vn < 0.0:
                vel[p, 0] -= vn * nxv
                vel[p, 1] -= vn * nyv
                vel[p, 2] -= vn * nzv
                tvx = vel[p, 0]; tvy = vel[p, 1]; tvz = vel[p, 2]
                tmag = np.sqrt(tvx * tvx + tvy * tvy + tvz * tvz)
                if tmag > 1e-12:
                    scale = min(1.0, mu * (-vn) / tmag)
                    vel[p, 0] -= scale * tvx
                    vel[p, 1] -= scale * tvy
                    vel[p, 2] -= scale * tvz
        if dx_acc != 0.0 or dy_acc != 0.0 or dz_acc != 0.0:
            pos[p, 0] = px + dx_acc
            pos[p, 1] = py + dy_acc
            pos[p, 2] = pz + dz_acc


def collide_with_static(pos, vel, index: HashGrid, h: float, mu: float, dt_sub: float) -> None:
    index.build_neighborhoods()
    _collide_static_fast(pos, vel, index.points, index.nbr_start, index.nbr_idx, h, mu,
                         index.origin, 1.0 / index.cell_size,
                         index.nx, index.ny, index.nz)


def collide_pair(pos_a, vel_a, invm_a, pos_b, vel_b, invm_b, h: float, mu: float, dt_sub: float) -> None:
    """Symmetric contact between two particle sets (both sides corrected)."""
    lo = np.maximum(pos_a.min(0), pos_b.min(0)) - 2 * h
    hi = np.minimum(pos_a.max(0), pos_b.max(0)) + 2 * h
    if (lo >= hi).any():
        return
    vel_a0 = vel_a.copy()
    pos_a0 = pos_a.copy()
    grid_b = HashGrid(pos_b, h, lo, hi)
    _collide_points(pos_a, vel_a, pos_b, vel_b, invm_b, invm_a, h, mu, 1.0 / dt_sub,
                    grid_b.origin, 1.0 / grid_b.cell_size, grid_b.nx, grid_b.ny, grid_b.nz,
                    grid_b.cell_start, grid_b.point_idx, grid_b.occupancy, 1)
    grid_a = HashGrid(pos_a0, h, lo, hi)
    _collide_points(pos_b, vel_b, pos_a0, vel_a0, invm_a, invm_b, h, mu, 1.0 / dt_sub,
                    grid_a.origin, 1.0 / grid_a.cell_size, grid_a.nx, grid_a.ny, grid_a.nz,
                    grid_a.cell_start, grid_a.point_idx, grid_a.occupancy, 1)


def collide_with_boxes(pos, vel, boxes, h: float, mu: float, dt_sub: float = 1e-3) -> None:
    """boxes: sequence of (center, rotation, half_extents, linear_vel, angular_vel)."""
    if not boxes:
        return
    centers = np.stack([b[0] for b in boxes]).astype(np.float64)
    rots = np.stack([b[1] for b in boxes]).astype(np.float64)
    halves = np.stack([b[2] for b in boxes]).astype(np.float64)
    linv = np.stack([b[3] for b in boxes]).astype(np.float64)
    angv = np.stack([b[4] for b in boxes]).astype(np.float64)
    _collide_boxes(pos, vel, h, centers, rots, halves, linv, angv, mu, 1.0 / dt_sub)


def aabbs_overlap(pos_a, pos_b, margin: float) -> bool:
    lo_a, hi_a = pos_a.min(0) - margin, pos_a.max(0) + margin
    lo_b, hi_b = pos_b.min(0), pos_b.max(0)
    return bool((lo_a <= hi_b).all() and (lo_b <= hi_a).all())
