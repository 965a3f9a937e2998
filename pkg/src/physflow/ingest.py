"""Scene-bundle loading and depth unprojection into a simulatable SceneState.

A bundle is the file-based stand-in for an upstream reconstruction stack: the
original image and depth, an inpainted background image/depth pair, per-object
masks with material blocks, and optional pre-registered occluded-surface
points. Directory layout (all little-endian, row-major):

    meta.json              width, height, intrinsics {fx fy cx cy},
                           optional gravity [x y z], masks: [material blocks]
    image.png              H x W x 3 u8
    depth.f32              H * W float32, meters
    background.png         inpainted background image
    background_depth.f32   H * W float32
    mask_<i>.png           8-bit, nonzero = inside object i
    occluded_<i>.f32       optional, M * 6 float32 (xyz rgb) per object i
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import DegenerateObject, InvalidDepth, MalformedBundle, NotFound
from .scene import (
    Camera, ClothMaterial, DynamicObject, ElasticMaterial, GranularMaterial,
    LiquidMaterial, MaterialParams, MpmState, PbdState, RigidMaterial, SceneState,
    SmokeMaterial, make_material, DEFAULT_GRAVITY, DEFAULT_PARTICLE_SIZE,
)
from .physics.rigid import make_rigid_state

_KNN_EDGES = 6  # neighbors for elastic stretch topology
_VOLUMETRIC = (RigidMaterial, ElasticMaterial, LiquidMaterial, GranularMaterial)


@dataclass
class MaskEntry:
    mask: np.ndarray  # (H, W) bool
    material: MaterialParams
    occluded_points: Optional[np.ndarray] = None  # (M, 3)
    occluded_colors: Optional[np.ndarray] = None  # (M, 3) in [0, 1]
    name: str = ""


@dataclass
class SceneBundle:
    image: np.ndarray  # (H, W, 3) u8
    depth: np.ndarray  # (H, W) f32
    intrinsics: dict  # fx, fy, cx, cy
    background_image: np.ndarray
    background_depth: np.ndarray
    masks: list[MaskEntry]
    gravity: Optional[tuple] = None

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]


def _read_f32(path: Path, count: int, what: str) -> np.ndarray:
    if not path.is_file():
        raise NotFound(f"missing {path.name}")
    data = np.fromfile(path, dtype="<f4")
    if count >= 0 and len(data) != count:
        raise MalformedBundle(f"{what}: {len(data)} float32 values, expected {count}")
    return data


def _read_png(path: Path, what: str) -> np.ndarray:
    if not path.is_file():
        raise NotFound(f"missing {path.name}")
    return np.asarray(Image.open(path))


def load_scene_bundle(path) -> SceneBundle:
    """Load and fully validate a bundle directory."""
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise NotFound(f"missing meta.json under {root}")
    meta = json.loads(meta_path.read_text("utf-8"))
    try:
        w, h = int(meta["width"]), int(meta["height"])
        intr = {k: float(meta["intrinsics"][k]) for k in ("fx", "fy", "cx", "cy")}
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedBundle(f"meta.json: {exc!r}") from None

    image = _read_png(root / "image.png", "image")
    background = _read_png(root / "background.png", "background")
    for name, arr in (("image.png", image), ("background.png", background)):
        if arr.ndim != 3 or arr.shape[2] < 3:
            raise MalformedBundle(f"{name} must be RGB")
        if arr.shape[:2] != (h, w):
            raise MalformedBundle(f"{name} is {arr.shape[1]}x{arr.shape[0]}, meta says {w}x{h}")
    image = image[:, :, :3]
    background = background[:, :, :3]

    depth = _read_f32(root / "depth.f32", h * w, "depth.f32").reshape(h, w)
    bg_depth = _read_f32(root / "background_depth.f32", h * w, "background_depth.f32").reshape(h, w)
    if not np.isfinite(bg_depth).all() or (bg_depth <= 0).any():
        raise InvalidDepth("background_depth.f32 must be finite and > 0 everywhere")

    entries: list[MaskEntry] = []
    taken = np.zeros((h, w), bool)
    for i, block in enumerate(meta.get("masks", [])):
        mask_img = _read_png(root / f"mask_{i}.png", f"mask_{i}")
        if mask_img.ndim == 3:
            mask_img = mask_img[:, :, 0]
        if mask_img.shape != (h, w):
            raise MalformedBundle(f"mask_{i}.png is {mask_img.shape}, expected {(h, w)}")
        mask = mask_img != 0
        if (mask & taken).any():
            raise MalformedBundle(f"mask_{i} overlaps an earlier mask")
        taken |= mask
        d = depth[mask]
        if not np.isfinite(d).all() or (d <= 0).any():
            raise InvalidDepth(f"mask_{i}: depth must be finite and > 0 at masked pixels")
        try:
            material = make_material(block["material"], **block.get("params", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedBundle(f"mask_{i} material block: {exc}") from None
        occ_pts = occ_col = None
        occ_path = root / f"occluded_{i}.f32"
        if occ_path.is_file():
            raw = _read_f32(occ_path, -1, f"occluded_{i}")
            if len(raw) % 6:
                raise MalformedBundle(f"occluded_{i}.f32 length {len(raw)} not a multiple of 6")
            raw = raw.reshape(-1, 6)
            if not np.isfinite(raw).all():
                raise MalformedBundle(f"occluded_{i}.f32 contains non-finite values")
            occ_pts = raw[:, :3].astype(np.float64)
            occ_col = np.clip(raw[:, 3:6].astype(np.float64), 0.0, 1.0)
        entries.append(MaskEntry(mask, material, occ_pts, occ_col, block.get("name", f"object_{i}")))

    gravity = tuple(meta["gravity"]) if "gravity" in meta else None
    return SceneBundle(image, depth.astype(np.float32), intr, background,
                       bg_depth.astype(np.float32), entries, gravity)


def save_scene_bundle(bundle: SceneBundle, path) -> None:
    """Write a bundle directory (used by tests and the demo generator)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    blocks = []
    for i, e in enumerate(bundle.masks):
        mat = {k: v for k, v in e.material.__dict__.items() if v is not None}
        blocks.append({"material": e.material.kind, "params": mat, "name": e.name})
        Image.fromarray((e.mask * 255).astype(np.uint8)).save(root / f"mask_{i}.png")
        if e.occluded_points is not None:
            raw = np.concatenate([e.occluded_points, e.occluded_colors], axis=1)
            raw.astype("<f4").tofile(root / f"occluded_{i}.f32")
    meta = {
        "width": bundle.width, "height": bundle.height,
        "intrinsics": bundle.intrinsics, "masks": blocks,
    }
    if bundle.gravity is not None:
        meta["gravity"] = list(bundle.gravity)
    (root / "meta.json").write_text(json.dumps(meta, indent=1), "utf-8")
    Image.fromarray(bundle.image).save(root / "image.png")
    Image.fromarray(bundle.background_image).save(root / "background.png")
    bundle.depth.astype("<f4").tofile(root / "depth.f32")
    bundle.background_depth.astype("<f4").tofile(root / "background_depth.f32")


# ---------------------------------------------------------------------------
# Unprojection

def unproject(depth: np.ndarray, intrinsics, mask: np.ndarray, colors: np.ndarray):
    """Lift masked pixels to camera-frame 3D points.

    Returns (positions (N, 3), colors (N, 3) in [0, 1]), one point per true
    mask pixel in row-major order.
    """
    if isinstance(intrinsics, dict):
        fx, fy, cx, cy = (intrinsics[k] for k in ("fx", "fy", "cx", "cy"))
    else:
        fx, fy, cx, cy = intrinsics
    rows, cols = np.nonzero(mask)
    d = depth[rows, cols].astype(np.float64)
    if not np.isfinite(d).all() or (d <= 0).any():
        raise InvalidDepth("depth must be finite and > 0 under the mask")
    x = (cols - cx) * d / fx
    y = (rows - cy) * d / fy
    pts = np.stack([x, y, d], axis=1)
    col = colors[rows, cols].astype(np.float64)
    if col.max(initial=0.0) > 1.0:
        col = col / 255.0
    return pts, col


# ---------------------------------------------------------------------------
# Topology builders

def _knn_edges(points: np.ndarray, k: int) -> np.ndarray:
    from scipy.spatial import cKDTree

    tree = cKDTree(points)
    kq = min(k + 1, len(points))
    _, nbr = tree.query(points, k=kq)
    if nbr.ndim == 1:
        nbr = nbr[:, None]
    pairs = set()
    for i in range(len(points)):
        for j in nbr[i, 1:]:
            if j != i:
                pairs.add((min(i, int(j)), max(i, int(j))))
    if not pairs:
        return np.zeros((0, 2), np.int64)
    return np.array(sorted(pairs), np.int64)


def _second_ring_pairs(edges: np.ndarray, n: int, cap_per_vertex: int = 4) -> np.ndarray:
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    direct = {(min(i, j), max(i, j)) for i, j in edges}
    pairs = set()
    for v in range(n):
        nb = sorted(adj[v])
        added = 0
        for a in range(len(nb)):
            for b in range(a + 1, len(nb)):
                key = (min(nb[a], nb[b]), max(nb[a], nb[b]))
                if key not in direct and key not in pairs:
                    pairs.add(key)
                    added += 1
                    if added >= cap_per_vertex:
                        break
            if added >= cap_per_vertex:
                break
    if not pairs:
        return np.zeros((0, 2), np.int64)
    return np.array(sorted(pairs), np.int64)


def _delaunay_tets(points: np.ndarray, min_volume: float) -> tuple[np.ndarray, np.ndarray]:
    from scipy.spatial import Delaunay, QhullError

    try:
        tri = Delaunay(points, qhull_options="QJ")
    except (QhullError, ValueError):
        return np.zeros((0, 4), np.int64), np.zeros(0)
    tets = tri.simplices.astype(np.int64)
    a = points[tets[:, 1]] - points[tets[:, 0]]
    b = points[tets[:, 2]] - points[tets[:, 0]]
    c = points[tets[:, 3]] - points[tets[:, 0]]
    vols = np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0
    flip = vols < 0
    tets[flip, 2], tets[flip, 3] = tets[flip, 3].copy(), tets[flip, 2].copy()
    vols = np.abs(vols)
    keep = vols > min_volume
    return tets[keep], vols[keep]


def _grid_cloth_topology(mask: np.ndarray, positions: np.ndarray):
    """Lattice topology for a mask treated as a regular sheet: structural and
    shear edges between neighboring pixels, bending pairs two pixels apart."""
    rows, cols = np.nonzero(mask)
    index = {(int(r), int(c)): i for i, (r, c) in enumerate(zip(rows, cols))}
    edges = []
    bends = []
    for i, (r, c) in enumerate(zip(rows, cols)):
        r, c = int(r), int(c)
        for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):  # structural + shear
            j = index.get((r + dr, c + dc))
            if j is not None:
                edges.append((i, j))
        for dr, dc in ((0, 2), (2, 0)):
            j = index.get((r + dr, c + dc))
            if j is not None:
                bends.append((i, j))
    edges = np.array(edges, np.int64) if edges else np.zeros((0, 2), np.int64)
    bends = np.array(bends, np.int64) if bends else np.zeros((0, 2), np.int64)
    return edges, bends


def _rest_lengths(points: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    if len(pairs) == 0:
        return np.zeros(0)
    return np.linalg.norm(points[pairs[:, 0]] - points[pairs[:, 1]], axis=1)


def build_solver_state(material: MaterialParams, positions: np.ndarray,
                       particle_size: float = DEFAULT_PARTICLE_SIZE,
                       grid_mask: Optional[np.ndarray] = None,
                       n_grid_points: int = 0):
    """Initialize per-solver state for a freshly built object."""
    n = len(positions)
    volume = particle_size ** 3
    if isinstance(material, RigidMaterial):
        if material.mass is not None:
            masses = np.full(n, material.mass / n)
        else:
            masses = np.full(n, material.density * volume)
        return make_rigid_state(positions, masses)
    if isinstance(material, (LiquidMaterial, GranularMaterial)):
        F = np.tile(np.eye(3), (n, 1, 1))
        return MpmState(F, np.full(n, volume), np.full(n, material.density * volume))
    masses = np.full(n, material.density * volume)
    if isinstance(material, SmokeMaterial):
        from .physics.pbd import sph_density

        hk = 2.5 * particle_size
        rho = sph_density(positions, masses, hk)
        return PbdState(masses, np.zeros((0, 2), np.int64), np.zeros(0),
                        np.zeros((0, 2), np.int64), np.zeros(0),
                        np.zeros((0, 4), np.int64), np.zeros(0),
                        rest_density=float(rho.mean()), kernel_radius=hk)
    if isinstance(material, ClothMaterial) and grid_mask is not None:
        edges, bends = _grid_cloth_topology(grid_mask, positions)
        if n_grid_points < n:  # attach occluded extras by nearest neighbors
            extra = _knn_edges(positions, 3)
            extra = extra[(extra >= n_grid_points).any(axis=1)]
            edges = np.concatenate([edges, extra]) if len(extra) else edges
    else:
        edges = _knn_edges(positions, _KNN_EDGES)
        bends = _second_ring_pairs(edges, n)
    tets = np.zeros((0, 4), np.int64)
    vols = np.zeros(0)
    if isinstance(material, ElasticMaterial) and n >= 8:
        tets, vols = _delaunay_tets(positions, (particle_size / 10.0) ** 3)
    return PbdState(masses, edges, _rest_lengths(positions, edges),
                    bends, _rest_lengths(positions, bends), tets, vols)


# ---------------------------------------------------------------------------
# Scene assembly

def build_scene(bundle: SceneBundle, particle_size: float = DEFAULT_PARTICLE_SIZE) -> SceneState:
    """Assemble the simulatable scene: full-frame inpainted background plus one
    dynamic object per mask (unprojected pixels plus occluded points)."""
    h, w = bundle.height, bundle.width
    full = np.ones((h, w), bool)
    bg_pos, bg_col = unproject(bundle.background_depth, bundle.intrinsics, full,
                               bundle.background_image)
    objects = []
    for i, entry in enumerate(bundle.masks):
        pts, col = unproject(bundle.depth, bundle.intrinsics, entry.mask, bundle.image)
        n_pix = len(pts)
        if entry.occluded_points is not None and len(entry.occluded_points):
            pts = np.concatenate([pts, entry.occluded_points])
            col = np.concatenate([col, entry.occluded_colors])
        if isinstance(entry.material, _VOLUMETRIC) and len(pts) < 4:
            raise DegenerateObject(
                f"object {i} has {len(pts)} particles; volumetric materials need >= 4")
        obj = DynamicObject(pts, np.zeros_like(pts), col, entry.material, None, entry.name)
        grid_mask = entry.mask if isinstance(entry.material, ClothMaterial) else None
        obj.solver_state = build_solver_state(entry.material, obj.positions, particle_size,
                                              grid_mask, n_pix)
        objects.append(obj)

    intr = bundle.intrinsics
    camera = Camera(intr["fx"], intr["fy"], intr["cx"], intr["cy"], w, h)
    gravity = np.array(bundle.gravity if bundle.gravity is not None else DEFAULT_GRAVITY)
    return SceneState(bg_pos, bg_col, objects, camera, 0.0, gravity)
