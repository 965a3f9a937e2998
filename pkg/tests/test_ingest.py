import numpy as np
import pytest

from physflow.errors import DegenerateObject, InvalidDepth, MalformedBundle, NotFound
from physflow.ingest import build_scene, load_scene_bundle, unproject


class TestLoadBundle:
    def test_minimal_bundle_one_pixel(self, tiny_bundle_factory):
        path = tiny_bundle_factory(h=2, w=2, mask_pixels=((0, 1),), material="rigid")
        bundle = load_scene_bundle(path)
        assert bundle.width == 2 and bundle.height == 2
        assert bundle.masks[0].mask.sum() == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(NotFound):
            load_scene_bundle(tmp_path / "nope")

    def test_missing_depth(self, tiny_bundle_factory):
        path = tiny_bundle_factory()
        (path / "depth.f32").unlink()
        with pytest.raises(NotFound):
            load_scene_bundle(path)

    def test_zero_depth_under_mask(self, tiny_bundle_factory):
        path = tiny_bundle_factory()
        h = w = 8
        depth = np.fromfile(path / "depth.f32", "<f4").reshape(h, w).copy()
        depth[3, 3] = 0.0
        depth.tofile(path / "depth.f32")
        with pytest.raises(InvalidDepth):
            load_scene_bundle(path)

    def test_nan_depth_under_mask(self, tiny_bundle_factory):
        path = tiny_bundle_factory()
        depth = np.fromfile(path / "depth.f32", "<f4").reshape(8, 8).copy()
        depth[3, 4] = np.nan
        depth.tofile(path / "depth.f32")
        with pytest.raises(InvalidDepth):
            load_scene_bundle(path)

    def test_overlapping_masks(self, tiny_bundle_factory):
        from PIL import Image

        path = tiny_bundle_factory()
        # duplicate the first mask as a second object -> overlap
        import json

        meta = json.loads((path / "meta.json").read_text())
        meta["masks"].append(meta["masks"][0])
        (path / "meta.json").write_text(json.dumps(meta))
        Image.open(path / "mask_0.png").save(path / "mask_1.png")
        with pytest.raises(MalformedBundle):
            load_scene_bundle(path)

    def test_dimension_mismatch(self, tiny_bundle_factory):
        path = tiny_bundle_factory()
        np.zeros(7, "<f4").tofile(path / "depth.f32")
        with pytest.raises(MalformedBundle):
            load_scene_bundle(path)

    def test_bad_material_block(self, tiny_bundle_factory):
        import json

        path = tiny_bundle_factory()
        meta = json.loads((path / "meta.json").read_text())
        meta["masks"][0]["material"] = "unobtainium"
        (path / "meta.json").write_text(json.dumps(meta))
        with pytest.raises(MalformedBundle):
            load_scene_bundle(path)


class TestUnproject:
    INTR = {"fx": 100.0, "fy": 100.0, "cx": 4.0, "cy": 4.0}

    def test_principal_point(self):
        depth = np.full((8, 8), 2.0)
        mask = np.zeros((8, 8), bool)
        mask[4, 4] = True  # (u, v) = (cx, cy)
        pts, _ = unproject(depth, self.INTR, mask, np.zeros((8, 8, 3)))
        np.testing.assert_allclose(pts[0], [0.0, 0.0, 2.0])

    def test_one_focal_length_off_axis(self):
        # u = cx + fx, depth 1 -> x = (u - cx) * d / fx = 1
        intr = {"fx": 3.0, "fy": 3.0, "cx": 1.0, "cy": 4.0}
        depth = np.full((8, 8), 1.0)
        mask = np.zeros((8, 8), bool)
        mask[4, 4] = True  # u - cx = 3 = fx
        pts, _ = unproject(depth, intr, mask, np.zeros((8, 8, 3)))
        np.testing.assert_allclose(pts[0], [1.0, 0.0, 1.0])

    def test_full_frame_plane_matches_hand_formula(self):
        # independent oracle: evaluate the pinhole formula pixel by pixel
        h = w = 4
        intr = {"fx": 7.0, "fy": 5.0, "cx": 2.0, "cy": 1.5}
        depth = np.full((h, w), 3.0)
        colors = np.random.default_rng(0).uniform(0, 1, (h, w, 3))
        pts, cols = unproject(depth, intr, np.ones((h, w), bool), colors)
        assert len(pts) == 16
        k = 0
        for v in range(h):
            for u in range(w):
                expect = [(u - 2.0) * 3.0 / 7.0, (v - 1.5) * 3.0 / 5.0, 3.0]
                np.testing.assert_allclose(pts[k], expect, atol=1e-12)
                np.testing.assert_allclose(cols[k], colors[v, u])
                k += 1
        assert np.ptp(pts[:, 2]) == 0.0  # coplanar: all z equal

    def test_count_is_popcount(self):
        rng = np.random.default_rng(3)
        mask = rng.uniform(size=(8, 8)) < 0.4
        depth = np.full((8, 8), 1.5)
        pts, _ = unproject(depth, self.INTR, mask, np.zeros((8, 8, 3)))
        assert len(pts) == int(mask.sum())

    def test_nonfinite_depth_rejected(self):
        depth = np.full((4, 4), np.inf)
        with pytest.raises(InvalidDepth):
            unproject(depth, self.INTR, np.ones((4, 4), bool), np.zeros((4, 4, 3)))


class TestBuildScene:
    def test_zero_masks(self, tiny_bundle_factory):
        path = tiny_bundle_factory(mask_pixels=())
        bundle = load_scene_bundle(path)
        bundle.masks = []
        state = build_scene(bundle)
        assert state.objects == []
        assert len(state.background_positions) == 64  # every pixel

    def test_counts_and_zero_velocity(self, tiny_bundle_factory):
        h = w = 16
        pix = [(r, c) for r in range(4, 14) for c in range(4, 14)]  # 100 pixels
        occ = np.random.default_rng(1).uniform(0, 1, (50, 3)) + np.array([0, 0, 1.5])
        path = tiny_bundle_factory(h=h, w=w, mask_pixels=pix, material="rigid",
                                   occluded=occ)
        state = build_scene(load_scene_bundle(path))
        obj = state.objects[0]
        assert obj.count == 150  # 100 unprojected + 50 occluded
        assert (obj.velocities == 0).all()
        # bookkeeping: background + objects == pixels + occluded points
        assert len(state.background_positions) + state.particle_count == h * w + 100 + 50

    def test_granular_particle_mass(self, tiny_bundle_factory):
        pix = [(r, c) for r in range(2, 6) for c in range(2, 6)]
        path = tiny_bundle_factory(h=8, w=8, mask_pixels=pix, material="granular",
                                   params={"density": 1500.0})
        state = build_scene(load_scene_bundle(path), particle_size=1e-2)
        # mass = rho * h^3 = 1500 * 1e-6
        np.testing.assert_allclose(state.objects[0].solver_state.masses, 1.5e-3)

    def test_degenerate_volumetric(self, tiny_bundle_factory):
        path = tiny_bundle_factory(mask_pixels=((1, 1), (1, 2)), material="rigid")
        with pytest.raises(DegenerateObject):
            build_scene(load_scene_bundle(path))

    def test_deterministic(self, tiny_bundle_factory):
        from physflow.scene import scene_to_bytes

        path = tiny_bundle_factory(material="elastic",
                                   mask_pixels=[(r, c) for r in range(2, 7) for c in range(2, 7)])
        s1 = build_scene(load_scene_bundle(path))
        s2 = build_scene(load_scene_bundle(path))
        assert scene_to_bytes(s1) == scene_to_bytes(s2)

    def test_gravity_override(self, tiny_bundle_factory):
        path = tiny_bundle_factory(gravity=(0.0, 9.8, 0.0))
        state = build_scene(load_scene_bundle(path))
        np.testing.assert_array_equal(state.gravity, [0.0, 9.8, 0.0])

    def test_cloth_gets_lattice_topology(self, tiny_bundle_factory):
        pix = [(r, c) for r in range(1, 7) for c in range(1, 7)]
        path = tiny_bundle_factory(h=8, w=8, mask_pixels=pix, material="cloth")
        state = build_scene(load_scene_bundle(path))
        st = state.objects[0].solver_state
        assert len(st.edges) > 0 and len(st.bend_pairs) > 0
        assert len(st.tets) == 0

    def test_elastic_gets_knn_and_tets(self, tiny_bundle_factory):
        pix = [(r, c) for r in range(1, 7) for c in range(1, 7)]
        occ = np.array([[(c - 4) * 0.04, (r - 4) * 0.04, 2.2]
                        for r in range(1, 7) for c in range(1, 7)])
        path = tiny_bundle_factory(h=8, w=8, mask_pixels=pix, material="elastic",
                                   occluded=occ)
        state = build_scene(load_scene_bundle(path))
        st = state.objects[0].solver_state
        assert len(st.edges) > 0
        assert len(st.tets) > 0
        assert (st.rest_volumes > 0).all()
