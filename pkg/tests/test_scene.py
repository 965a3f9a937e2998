import io

import numpy as np
import pytest

from physflow.scene import (
    Camera, CameraPose, ClothMaterial, DynamicObject, ElasticMaterial, ForceField,
    GranularMaterial, GripperCommand, LiquidMaterial, PointForce, RigidMaterial,
    SceneState, SmokeMaterial, load_scene, make_material, save_scene, scenes_equal,
)

from conftest import identity_camera, make_object


class TestCamera:
    def test_valid(self):
        cam = identity_camera()
        assert cam.fx == 100 and cam.width == 96

    def test_rotation_must_be_orthonormal(self):
        rot = np.eye(3)
        rot[0, 1] = 1e-3
        with pytest.raises(ValueError, match="orthonormal"):
            Camera(100, 100, 50, 50, 100, 100, rotation=rot)

    def test_principal_point_inside(self):
        with pytest.raises(ValueError):
            Camera(100, 100, 150, 50, 100, 100)

    def test_positive_focal(self):
        with pytest.raises(ValueError):
            Camera(-1, 100, 50, 50, 100, 100)


class TestMaterialDefaults:
    """Defaults must match the simulation-parameter table field for field."""

    def test_rigid(self):
        m = RigidMaterial()
        assert m.friction_coefficient == 0.1

    def test_liquid(self):
        m = LiquidMaterial()
        assert m.youngs_modulus == 1e7
        assert m.poissons_ratio == 0.2

    def test_granular(self):
        m = GranularMaterial()
        assert m.youngs_modulus == 1e6
        assert m.poissons_ratio == 0.2
        assert m.friction_angle == 45.0

    def test_elastic(self):
        m = ElasticMaterial()
        assert (m.stretch_compliance, m.bending_compliance, m.volume_compliance) == (0.0, 0.0, 0.0)
        assert (m.stretch_relaxation, m.bending_relaxation) == (0.3, 0.3)
        assert m.volume_relaxation == 0.1

    def test_cloth(self):
        m = ClothMaterial()
        assert m.stretch_compliance == 1e-7
        assert m.bending_compliance == 1e-5

    def test_smoke(self):
        assert SmokeMaterial().viscosity_coefficient == 0.1

    def test_general_defaults(self):
        from physflow.physics.step import SimConfig
        from physflow.scene import DEFAULT_GRAVITY, DEFAULT_PARTICLE_SIZE

        cfg = SimConfig()
        assert cfg.dt == 1e-2
        assert cfg.substeps == 10
        assert cfg.mpm_grid_density == 64
        assert DEFAULT_PARTICLE_SIZE == 1e-2
        assert DEFAULT_GRAVITY == (0.0, 0.0, -9.8)

    def test_factory(self):
        m = make_material("granular", density=1200.0)
        assert isinstance(m, GranularMaterial) and m.density == 1200.0
        with pytest.raises(ValueError):
            make_material("jelly")


class TestMaterialValidation:
    @pytest.mark.parametrize("kwargs", [
        {"density": 0.0}, {"density": -1.0},
    ])
    def test_density(self, kwargs):
        with pytest.raises(ValueError):
            GranularMaterial(**kwargs)

    def test_poisson_range(self):
        with pytest.raises(ValueError):
            LiquidMaterial(poissons_ratio=0.5)
        LiquidMaterial(poissons_ratio=0.0)

    def test_friction_angle_range(self):
        with pytest.raises(ValueError):
            GranularMaterial(friction_angle=90.0)
        GranularMaterial(friction_angle=0.0)

    def test_negative_compliance(self):
        with pytest.raises(ValueError):
            ClothMaterial(stretch_compliance=-1e-9)


class TestActions:
    def test_point_force_validation(self):
        with pytest.raises(ValueError):
            PointForce(np.zeros(3), np.zeros(3), radius=0.0, duration=1.0)
        with pytest.raises(ValueError):
            PointForce(np.zeros(3), np.zeros(3), radius=0.1, duration=0.0)

    def test_gripper_validation(self):
        q = np.array([1.0, 0.0, 0.0, 0.0])
        GripperCommand(np.zeros(3), q, 0.5)
        with pytest.raises(ValueError, match="unit quaternion"):
            GripperCommand(np.zeros(3), q * 1.01, 0.5)
        with pytest.raises(ValueError):
            GripperCommand(np.zeros(3), q, 1.5)

    def test_force_field_region_shape(self):
        ForceField(np.array([1.0, 0, 0]), np.zeros((2, 3)))
        from physflow.errors import ShapeError

        with pytest.raises(ShapeError):
            ForceField(np.array([1.0, 0, 0]), np.zeros((3, 2)))


class TestDynamicObject:
    def test_finite_required(self):
        pos = np.zeros((2, 3))
        pos[0, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            DynamicObject(pos, np.zeros((2, 3)), np.zeros((2, 3)), RigidMaterial())

    def test_mpm_masses_positive(self):
        obj = make_object(GranularMaterial(), np.random.default_rng(0).uniform(0, 0.1, (8, 3)))
        assert (obj.solver_state.masses > 0).all()


def _rich_scene():
    rng = np.random.default_rng(5)
    objs = [
        make_object(RigidMaterial(), rng.uniform(0, 0.2, (12, 3)), name="r"),
        make_object(ElasticMaterial(), rng.uniform(0.4, 0.6, (16, 3)), name="e"),
        make_object(GranularMaterial(), rng.uniform(0.8, 0.9, (10, 3)), name="g"),
        make_object(SmokeMaterial(), rng.uniform(1.1, 1.2, (10, 3)), name="s"),
    ]
    objs[2].solver_state.F += rng.normal(0, 1e-3, objs[2].solver_state.F.shape)
    objs[2].solver_state.C += rng.normal(0, 1e-3, objs[2].solver_state.C.shape)
    bg = rng.uniform(-1, 1, (30, 3))
    state = SceneState(bg, np.full((30, 3), 0.3), objs, identity_camera(), 0.125,
                       np.array([0.0, 0.0, -9.8]))
    for o in objs:
        o.velocities += rng.normal(0, 0.1, o.velocities.shape)
    return state


class TestSerialization:
    def test_round_trip_bit_identical(self):
        state = _rich_scene()
        buf = io.BytesIO()
        save_scene(state, buf)
        buf.seek(0)
        state2 = load_scene(buf)
        assert scenes_equal(state, state2)
        for a, b in zip(state.objects, state2.objects):
            assert np.array_equal(a.colors, b.colors)
            assert type(a.solver_state) is type(b.solver_state)
        g1 = state.objects[2].solver_state
        g2 = state2.objects[2].solver_state
        assert np.array_equal(g1.F, g2.F)
        assert np.array_equal(g1.C, g2.C)

    def test_double_round_trip_stable(self):
        state = _rich_scene()
        b1 = io.BytesIO()
        save_scene(state, b1)
        b1.seek(0)
        b2 = io.BytesIO()
        save_scene(load_scene(b1), b2)
        b1.seek(0)
        assert scenes_equal(load_scene(b1), load_scene(io.BytesIO(b2.getvalue())))

    def test_version_gate(self):
        import json

        import physflow.scene as sc

        state = _rich_scene()
        buf = io.BytesIO()
        save_scene(state, buf)
        data = np.load(io.BytesIO(buf.getvalue()))
        meta = json.loads(bytes(data["meta_json"]).decode())
        assert meta["version"] == 1

    def test_camera_action_copies(self):
        cam = identity_camera()
        act = CameraPose(cam)
        assert act.camera is cam
