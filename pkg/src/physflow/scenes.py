"""Procedural scenes for benchmarks, demos, and tests: a ground-plane
background plus parametric objects of each material class. World frame is
z-up; cameras follow the CV convention (x right, y down, z forward)."""

from __future__ import annotations

import numpy as np

from .ingest import build_solver_state
from .scene import (
    Camera, ClothMaterial, DynamicObject, GranularMaterial, MaterialParams,
    PbdState, RigidMaterial, SceneState,
)


def look_at(eye, target, up=(0.0, 0.0, 1.0), fx=700.0, fy=700.0,
            width=832, height=480) -> Camera:
    eye = np.asarray(eye, float)
    f = np.asarray(target, float) - eye
    f = f / np.linalg.norm(f)
    x = np.cross(f, np.asarray(up, float))
    x = x / np.linalg.norm(x)
    y = np.cross(f, x)
    y = y / np.linalg.norm(y)
    rot = np.stack([x, y, f])
    return Camera(fx, fy, width / 2.0, height / 2.0, width, height,
                  rotation=rot, translation=-rot @ eye)


def ground_plane(half_extent: float = 1.0, spacing: float = 0.01, z: float = 0.0,
                 n_target: int | None = None, color=(0.45, 0.42, 0.38)):
    """Regular grid of static points; ``n_target`` overrides spacing to hit a
    point budget."""
    if n_target is not None:
        spacing = 2.0 * half_extent / max(int(np.sqrt(n_target)) - 1, 1)
    xs = np.arange(-half_extent, half_extent + spacing / 2, spacing)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    pos = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(z))], axis=1)
    checker = ((gx.ravel() // 0.1).astype(int) + (gy.ravel() // 0.1).astype(int)) % 2
    col = np.tile(np.asarray(color, float), (len(pos), 1))
    col[checker == 1] *= 0.8
    return pos, col


def _box_points(center, size, spacing, jitter=0.0, seed=0):
    center = np.asarray(center, float)
    size = np.asarray(size, float)
    counts = np.maximum((size / spacing).round().astype(int), 1)
    axes = [(np.arange(c) + 0.5) / c * s - s / 2 for c, s in zip(counts, size)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1) + center
    if jitter:
        pts = pts + np.random.default_rng(seed).uniform(-jitter, jitter, pts.shape)
    return pts


def make_object(material: MaterialParams, center, size, spacing: float = 0.01,
                color=(0.8, 0.3, 0.2), jitter: float = 0.0, seed: int = 0,
                name: str = "") -> DynamicObject:
    pts = _box_points(center, size, spacing, jitter, seed)
    colors = np.tile(np.asarray(color, float), (len(pts), 1))
    obj = DynamicObject(pts, np.zeros_like(pts), colors, material, None,
                        name or material.kind)
    obj.solver_state = build_solver_state(material, obj.positions, spacing)
    return obj


def make_cloth_sheet(material: ClothMaterial, corner, nx: int, ny: int,
                     spacing: float = 0.01, color=(0.2, 0.4, 0.8),
                     name: str = "cloth") -> DynamicObject:
    """Horizontal sheet with lattice topology (structural+shear edges,
    two-apart bending pairs)."""
    corner = np.asarray(corner, float)
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    pts = corner + np.stack([ii.ravel() * spacing, jj.ravel() * spacing,
                             np.zeros(nx * ny)], axis=1)
    idx = np.arange(nx * ny).reshape(nx, ny)
    edges, bends = [], []
    for i in range(nx):
        for j in range(ny):
            for di, dj in ((0, 1), (1, 0), (1, 1), (1, -1)):
                a, b = i + di, j + dj
                if 0 <= a < nx and 0 <= b < ny:
                    edges.append((idx[i, j], idx[a, b]))
            for di, dj in ((0, 2), (2, 0)):
                a, b = i + di, j + dj
                if 0 <= a < nx and 0 <= b < ny:
                    bends.append((idx[i, j], idx[a, b]))
    edges = np.array(edges, np.int64)
    bends = np.array(bends, np.int64)
    masses = np.full(len(pts), material.density * spacing ** 3)
    state = PbdState(
        masses, edges, np.linalg.norm(pts[edges[:, 0]] - pts[edges[:, 1]], axis=1),
        bends, np.linalg.norm(pts[bends[:, 0]] - pts[bends[:, 1]], axis=1),
        np.zeros((0, 4), np.int64), np.zeros(0))
    colors = np.tile(np.asarray(color, float), (len(pts), 1))
    return DynamicObject(pts, np.zeros_like(pts), colors, material, state, name)


def make_scene(objects, background=None, camera=None, gravity=(0.0, 0.0, -9.8)) -> SceneState:
    if background is None:
        bg_pos, bg_col = ground_plane()
    else:
        bg_pos, bg_col = background
    cam = camera or look_at(eye=(0.0, -1.2, 0.7), target=(0.0, 0.0, 0.1))
    return SceneState(bg_pos, bg_col, list(objects), cam, 0.0, np.asarray(gravity, float))


# ---------------------------------------------------------------------------
# Benchmark scenes (acceptance targets)

def bench_scene(kind: str) -> SceneState:
    if kind == "stream_rate":
        # 480x832, 150k background + 20k dynamic rigid particles
        bg = ground_plane(half_extent=1.2, n_target=150_000)
        box = make_object(RigidMaterial(density=600.0), center=(0.0, 0.0, 0.22),
                          size=(0.27, 0.27, 0.27), spacing=0.01, name="crate")
        return make_scene([box], background=bg)
    if kind == "physics_rigid_pbd":
        # 5k particles total: rigid block + cloth sheet
        box = make_object(RigidMaterial(density=600.0), center=(0.0, 0.0, 0.15),
                          size=(0.17, 0.17, 0.16), spacing=0.01, name="crate")
        n_rigid = box.count
        side = int(np.sqrt(max(5000 - n_rigid, 4)))
        cloth = make_cloth_sheet(ClothMaterial(), corner=(-side * 0.005, 0.3, 0.3),
                                 nx=side, ny=side, spacing=0.01)
        return make_scene([box, cloth], background=ground_plane(half_extent=0.8))
    if kind == "physics_mpm":
        # 10k granular particles in a 64^3-bounded grid
        pile = make_object(GranularMaterial(), center=(0.0, 0.0, 0.16),
                           size=(0.22, 0.22, 0.22), spacing=0.01, jitter=1e-3,
                           name="sand")
        return make_scene([pile], background=ground_plane(half_extent=0.45))
    if kind == "empty":
        return make_scene([], background=(np.zeros((0, 3)), np.zeros((0, 3))))
    if kind == "demo":
        sand = make_object(GranularMaterial(), center=(-0.15, 0.0, 0.12),
                           size=(0.15, 0.15, 0.2), spacing=0.01, jitter=1e-3,
                           color=(0.85, 0.7, 0.4), name="sand")
        box = make_object(RigidMaterial(density=400.0), center=(0.18, 0.0, 0.1),
                          size=(0.12, 0.12, 0.12), spacing=0.01,
                          color=(0.7, 0.2, 0.2), name="crate")
        return make_scene([sand, box])
    raise ValueError(f"unknown bench scene {kind!r}")
