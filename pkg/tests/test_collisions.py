import numpy as np

from physflow.physics import collisions as C
from physflow.physics.step import PhysicsWorkspace, SimConfig, physics_step, resolve_collisions
from physflow.scene import RigidMaterial

from conftest import grid_block, ground, make_object, scene_with

H = 0.01


def static_grid(points):
    pts = np.asarray(points, float)
    return C.HashGrid(pts, H, pts.min(0) - 0.2, pts.max(0) + 0.2)


class TestStaticContacts:
    def test_exactly_at_separation_unchanged(self):
        grid = static_grid([[0.0, 0.0, 0.0]])
        pos = np.array([[0.0, 0.0, H]])
        vel = np.array([[0.0, 0.0, -1.0]])
        p0 = pos.copy()
        C.collide_with_static(pos, vel, grid, H, 0.1, 1e-3)
        assert np.array_equal(pos, p0)  # boundary of contact: no push

    def test_overlap_pushed_to_separation(self):
        grid = static_grid([[0.0, 0.0, 0.0]])
        pos = np.array([[0.0, 0.0, H / 2]])
        vel = np.zeros((1, 3))
        C.collide_with_static(pos, vel, grid, H, 0.1, 1e-3)
        d = np.linalg.norm(pos[0])
        assert d >= H - 1e-9
        np.testing.assert_allclose(pos[0], [0, 0, H], atol=1e-12)  # along the normal

    def test_approach_velocity_killed(self):
        grid = static_grid([[0.0, 0.0, 0.0]])
        pos = np.array([[0.0, 0.0, H * 0.6]])
        vel = np.array([[0.3, 0.0, -1.0]])
        C.collide_with_static(pos, vel, grid, H, 0.0, 1e-3)
        assert vel[0, 2] >= -1e-12  # no residual approach
        assert vel[0, 0] > 0.0  # frictionless: tangential survives

    def test_friction_damps_tangential(self):
        grid = static_grid([[0.0, 0.0, 0.0]])
        pos = np.array([[0.0, 0.0, H * 0.6]])
        vel = np.array([[0.3, 0.0, -1.0]])
        C.collide_with_static(pos, vel, grid, H, 10.0, 1e-3)
        assert abs(vel[0, 0]) < 1e-12  # clamp stops the slide

    def test_neighborhood_matches_naive_scan(self):
        # exactness of the precomputed lists against a brute-force oracle
        rng = np.random.default_rng(4)
        bg = rng.uniform(0, 0.2, (300, 3))
        grid = static_grid(bg)
        probes = rng.uniform(0, 0.2, (200, 3))
        vel = np.zeros_like(probes)
        pos = probes.copy()
        C.collide_with_static(pos, vel, grid, H, 0.0, 1e-3)
        for k in range(len(probes)):
            d0 = np.linalg.norm(bg - probes[k], axis=1).min()
            d1 = np.linalg.norm(bg - pos[k], axis=1).min()
            if d0 >= H:
                assert np.array_equal(pos[k], probes[k])
            else:
                assert d1 >= d0 - 1e-12  # pushed outward, never deeper


class TestDynamicPairs:
    def test_head_on_momentum_exchange(self):
        a = grid_block((-0.03, 0, 0), (0.03, 0.03, 0.03), 0.01)
        b = grid_block((+0.03, 0, 0), (0.03, 0.03, 0.03), 0.01)
        oa = make_object(RigidMaterial(), a, velocities=np.tile([0.5, 0, 0], (len(a), 1)))
        ob = make_object(RigidMaterial(), b, velocities=np.tile([-0.5, 0, 0], (len(b), 1)))
        state = scene_with([oa, ob], gravity=(0, 0, 0))
        cfg = SimConfig(dt=1e-2, substeps=10)
        ws = PhysicsWorkspace(state, cfg)
        masses = np.concatenate([oa.solver_state.masses, ob.solver_state.masses])
        for _ in range(12):
            state = physics_step(state, (), cfg, workspace=ws)
        vels = np.concatenate([o.velocities for o in state.objects])
        total = (masses[:, None] * vels).sum(0)
        scale = (masses * 0.5).sum()  # initial |momentum| of one side
        assert np.abs(total).max() / scale < 1e-6
        # bodies actually interacted
        assert state.objects[0].velocities[:, 0].mean() < 0.45

    def test_pair_projection_separates(self):
        pa = np.array([[0.0, 0.0, 0.0]])
        pb = np.array([[H / 2, 0.0, 0.0]])
        va = np.zeros((1, 3))
        vb = np.zeros((1, 3))
        C.collide_pair(pa, va, np.ones(1), pb, vb, np.ones(1), H, 0.1, 1e-3)
        assert np.linalg.norm(pa[0] - pb[0]) >= H - 1e-9


class TestNoTunneling:
    def test_resting_particle_penetration_bounded(self):
        # acceptance: 1000 steps resting on the ground, |penetration| < h
        bg = ground(half=0.1, spacing=0.01)
        obj = make_object(RigidMaterial(), np.array([[0.0, 0.0, 2 * H]]))
        state = scene_with([obj], background=bg)
        cfg = SimConfig(dt=1e-2, substeps=10)
        ws = PhysicsWorkspace(state, cfg)
        min_z = np.inf
        for _ in range(1000):
            state = physics_step(state, (), cfg, workspace=ws)
            min_z = min(min_z, state.objects[0].positions[0, 2])
        assert min_z > -H  # never tunnels through the plane


class TestBoxColliders:
    def test_one_way_pushout(self):
        boxes = [(np.zeros(3), np.eye(3), np.array([0.05, 0.05, 0.05]),
                  np.zeros(3), np.zeros(3))]
        pos = np.array([[0.0, 0.0, 0.05]])  # on the +z face, inside the h/2 shell
        vel = np.array([[0.0, 0.0, -0.5]])
        C.collide_with_boxes(pos, vel, boxes, H, 0.5)
        assert pos[0, 2] >= 0.05 + H / 2 - 1e-12
        assert vel[0, 2] >= -1e-12

    def test_moving_box_drags_contact(self):
        boxes = [(np.zeros(3), np.eye(3), np.array([0.05, 0.05, 0.05]),
                  np.array([1.0, 0.0, 0.0]), np.zeros(3))]
        pos = np.array([[0.0, 0.0, 0.052]])
        vel = np.zeros((1, 3))
        C.collide_with_boxes(pos, vel, boxes, H, 1.0)
        assert vel[0, 0] > 0.0  # friction pulls toward the box velocity


def test_resolve_collisions_public_surface():
    bg = ground(half=0.05, spacing=0.01)
    obj = make_object(RigidMaterial(), np.array([[0.0, 0.0, H / 2]]))
    state = scene_with([obj], background=bg)
    out = resolve_collisions(state, SimConfig())
    assert out.objects[0].positions[0, 2] >= H - 1e-9
    assert state.objects[0].positions[0, 2] == H / 2  # input untouched
