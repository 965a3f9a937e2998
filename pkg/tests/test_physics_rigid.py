import numpy as np
import pytest

from physflow.errors import DegenerateObject
from physflow.physics.rigid import rigid_substep
from physflow.physics.step import PhysicsWorkspace, SimConfig, physics_step
from physflow.scene import RigidMaterial

from conftest import grid_block, make_object, scene_with


def pairwise_distances(pts):
    return np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)


UNIT_SQUARE = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])


def procrustes_oracle(rest, current):
    """Brute-force SVD Procrustes: best rigid transform of rest onto current."""
    rc = rest - rest.mean(0)
    cc = current - current.mean(0)
    u, _, vt = np.linalg.svd(cc.T @ rc)
    d = np.linalg.det(u @ vt)
    r = u @ np.diag([1.0, 1.0, d]) @ vt
    return (r @ rc.T).T + current.mean(0), r


class TestShapeMatching:
    def test_perturbed_square_restores_distances(self):
        obj = make_object(RigidMaterial(), UNIT_SQUARE)
        obj.positions[2] += np.array([0.1, 0.07, -0.05])
        # no integration effects: zero accel, tiny dt with zero velocity
        out = rigid_substep(obj, 1e-2, np.zeros(3))
        rest_d = pairwise_distances(UNIT_SQUARE)
        new_d = pairwise_distances(out.positions)
        assert np.abs(new_d - rest_d).max() < 1e-6
        # cross-check against the independent Procrustes oracle
        goals, _ = procrustes_oracle(UNIT_SQUARE, obj.positions)
        assert np.abs(out.positions - goals).max() < 1e-9

    def test_translation_preserves_shape(self):
        obj = make_object(RigidMaterial(), UNIT_SQUARE)
        rest_d = pairwise_distances(UNIT_SQUARE)
        for _ in range(10):
            obj = rigid_substep(obj, 1e-3, np.array([3.0, -1.0, 2.0]))
        assert np.abs(pairwise_distances(obj.positions) - rest_d).max() < 1e-9

    def test_rotation_recovered(self):
        theta = np.pi / 2
        rot = np.array([[np.cos(theta), -np.sin(theta), 0],
                        [np.sin(theta), np.cos(theta), 0],
                        [0, 0, 1.0]])
        pts = np.concatenate([UNIT_SQUARE, [[0.5, 0.5, 0.7]]])  # non-planar
        obj = make_object(RigidMaterial(), pts)
        com = obj.solver_state.rest_com
        obj.positions[:] = (rot @ (pts - com).T).T + com
        out = rigid_substep(obj, 1e-3, np.zeros(3))
        _, r = procrustes_oracle(pts, out.positions)
        assert np.abs(r - rot).max() < 1e-6
        assert np.abs(out.positions - obj.positions).max() < 1e-9  # already rigid

    def test_collinear_rest_shape_degenerate(self):
        pts = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]])
        obj = make_object(RigidMaterial(), pts)
        with pytest.raises(DegenerateObject):
            rigid_substep(obj, 1e-3, np.zeros(3))


class TestKinematics:
    def test_ballistic_no_gravity(self):
        obj = make_object(RigidMaterial(), np.zeros((1, 3)),
                          velocities=np.array([[1.0, 0.0, 0.0]]))
        state = scene_with([obj], gravity=(0, 0, 0))
        cfg = SimConfig(dt=1e-2, substeps=1)
        out = physics_step(state, (), cfg)
        np.testing.assert_allclose(out.objects[0].positions[0], [0.01, 0, 0], atol=1e-15)

    def test_gravity_single_step_closed_form(self):
        obj = make_object(RigidMaterial(), np.zeros((1, 3)))
        state = scene_with([obj])
        cfg = SimConfig(dt=1e-2, substeps=1)
        out = physics_step(state, (), cfg)
        # symplectic Euler: v = -g dt; dz = v dt
        np.testing.assert_allclose(out.objects[0].velocities[0], [0, 0, -0.098], rtol=1e-12)
        np.testing.assert_allclose(out.objects[0].positions[0], [0, 0, -9.8e-4], rtol=1e-12)

    def test_free_fall_1000_steps_matches_closed_form(self):
        obj = make_object(RigidMaterial(), np.zeros((1, 3)))
        state = scene_with([obj])
        cfg = SimConfig(dt=1e-2, substeps=1)
        n = 1000
        for _ in range(n):
            state = physics_step(state, (), cfg)
        g, dt = 9.8, 1e-2
        expect_z = -g * dt * dt * (n * (n + 1) / 2)  # sum_{k=1..n} k
        assert abs(state.objects[0].positions[0, 2] - expect_z) < 1e-9
        assert abs(state.objects[0].velocities[0, 2] + g * dt * n) < 1e-9

    def test_substeps_equivalent_closed_form(self):
        obj = make_object(RigidMaterial(), np.zeros((1, 3)))
        state = scene_with([obj])
        cfg = SimConfig(dt=1e-2, substeps=10)
        for _ in range(10):
            state = physics_step(state, (), cfg)
        dt_sub, n = 1e-3, 100
        expect_z = -9.8 * dt_sub * dt_sub * (n * (n + 1) / 2)
        assert abs(state.objects[0].positions[0, 2] - expect_z) < 1e-9


class TestRigidDrift:
    def test_distance_drift_under_random_forces(self):
        # acceptance target: relative drift < 1e-3 over 300 steps
        pts = grid_block((0, 0, 0.5), (0.05, 0.05, 0.05), 0.0125)
        obj = make_object(RigidMaterial(density=800.0), pts)
        state = scene_with([obj], gravity=(0, 0, 0))
        cfg = SimConfig(dt=1e-2, substeps=10)
        ws = PhysicsWorkspace(state, cfg)
        rng = np.random.default_rng(7)
        from physflow.scene import ForceField

        rest_d = pairwise_distances(pts)
        np.fill_diagonal(rest_d, 1.0)
        for _ in range(300):
            accel = rng.normal(0.0, 2.0, 3)
            state = physics_step(state, [ForceField(accel)], cfg, workspace=ws)
        d = pairwise_distances(state.objects[0].positions)
        np.fill_diagonal(d, 1.0)
        assert (np.abs(d - rest_d) / rest_d).max() < 1e-3
