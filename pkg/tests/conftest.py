import numpy as np
import pytest

from physflow.ingest import MaskEntry, SceneBundle, build_solver_state
from physflow.scene import Camera, DynamicObject, SceneState


def identity_camera(fx=100.0, fy=100.0, width=96, height=96):
    return Camera(fx, fy, width / 2.0, height / 2.0, width, height)


def make_object(material, positions, colors=None, spacing=0.01, velocities=None, name=""):
    positions = np.array(positions, float)  # own copy: tests mutate freely
    n = len(positions)
    obj = DynamicObject(
        positions,
        np.zeros((n, 3)) if velocities is None else np.asarray(velocities, float),
        np.full((n, 3), 0.5) if colors is None else colors,
        material, None, name,
    )
    obj.solver_state = build_solver_state(material, obj.positions, spacing)
    return obj


def grid_block(center, size, spacing):
    center = np.asarray(center, float)
    size = np.asarray(size, float)
    counts = np.maximum((size / spacing).round().astype(int), 1)
    axes = [(np.arange(c) + 0.5) / c * s - s / 2 for c, s in zip(counts, size)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1) + center


def ground(half=0.5, spacing=0.01, z=0.0):
    xs = np.arange(-half, half + spacing / 2, spacing)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    pos = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)], axis=1)
    return pos, np.full((len(pos), 3), 0.4)


def scene_with(objects, background=None, gravity=(0.0, 0.0, -9.8), camera=None):
    if background is None:
        bg_pos, bg_col = np.zeros((0, 3)), np.zeros((0, 3))
    else:
        bg_pos, bg_col = background
    cam = camera or identity_camera()
    return SceneState(bg_pos, bg_col, list(objects), cam, 0.0, np.asarray(gravity, float))


@pytest.fixture
def tiny_bundle_factory(tmp_path):
    """Writes a small synthetic bundle directory and returns its path."""

    def build(h=8, w=8, mask_pixels=((3, 3), (3, 4), (4, 3), (4, 4)), material="rigid",
              params=None, occluded=None, depth_value=2.0, name="bundle", gravity=None):
        from physflow.ingest import save_scene_bundle

        rng = np.random.default_rng(0)
        image = rng.integers(0, 255, (h, w, 3), dtype=np.uint8)
        depth = np.full((h, w), depth_value, np.float32)
        bg = rng.integers(0, 255, (h, w, 3), dtype=np.uint8)
        bg_depth = np.full((h, w), depth_value + 0.5, np.float32)
        mask = np.zeros((h, w), bool)
        for r, c in mask_pixels:
            mask[r, c] = True
        occ_pts = occ_col = None
        if occluded is not None and len(occluded):
            occ_pts = np.asarray(occluded, float)
            occ_col = np.full((len(occ_pts), 3), 0.5)
        from physflow.scene import make_material

        entry = MaskEntry(mask, make_material(material, **(params or {})), occ_pts, occ_col)
        bundle = SceneBundle(image, depth, {"fx": 50.0, "fy": 50.0, "cx": w / 2, "cy": h / 2},
                            bg, bg_depth, [entry], gravity)
        path = tmp_path / name
        save_scene_bundle(bundle, path)
        return path

    return build
