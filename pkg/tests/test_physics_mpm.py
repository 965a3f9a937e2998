import numpy as np
import pytest

from physflow.errors import NumericalBlowup
from physflow.physics.mpm import MpmGrid, drucker_prager_alpha, mpm_substep
from physflow.physics.step import PhysicsWorkspace, SimConfig, physics_step
from physflow.scene import GranularMaterial, LiquidMaterial, PointForce

from conftest import grid_block, ground, make_object, scene_with


@pytest.mark.parametrize("material", [LiquidMaterial(), GranularMaterial()])
def test_single_particle_stress_free(material):
    obj = make_object(material, np.array([[0.5, 0.5, 0.5]]),
                      velocities=np.array([[0.2, -0.1, 0.3]]))
    grid = MpmGrid((0, 0, 0), (1, 1, 1), 64)
    out = mpm_substep(obj, grid, 1e-3, np.zeros(3), gravity=(0, 0, 0))
    assert np.abs(out.velocities[0] - obj.velocities[0]).max() < 1e-6
    assert np.abs(out.solver_state.F[0] - np.eye(3)).max() < 1e-6


def test_momentum_conserved_no_boundaries():
    # acceptance: relative total-momentum drift < 1e-4 over 100 substeps
    rng = np.random.default_rng(11)
    pts = grid_block((0.5, 0.5, 0.5), (0.2, 0.2, 0.2), 0.01)
    obj = make_object(LiquidMaterial(youngs_modulus=1e4), pts,
                      velocities=rng.normal(0, 0.05, (len(pts), 3)))
    grid = MpmGrid((0, 0, 0), (1, 1, 1), 64)
    masses = obj.solver_state.masses
    mom0 = (masses[:, None] * obj.velocities).sum(0)
    for _ in range(100):
        obj = mpm_substep(obj, grid, 2.5e-4, np.zeros(3), gravity=(0, 0, 0))
    mom = (masses[:, None] * obj.velocities).sum(0)
    drift = np.abs(mom - mom0).max() / max(np.abs(mom0).max(), 1e-12)
    assert drift < 1e-4


def test_granular_repose_angle():
    # Drucker-Prager property: settled slope stays below friction angle + 10 deg
    material = GranularMaterial()
    pts = grid_block((0.0, 0.0, 0.085), (0.1, 0.1, 0.17), 0.01)
    pts += np.random.default_rng(0).uniform(-5e-4, 5e-4, pts.shape)
    obj = make_object(material, pts)
    state = scene_with([obj], background=ground(half=0.4))
    cfg = SimConfig(dt=2.5e-3, substeps=10)
    ws = PhysicsWorkspace(state, cfg)
    for _ in range(240):  # 0.6 s: drop, spread, settle
        state = physics_step(state, (), cfg, workspace=ws)
    pos = state.objects[0].positions
    ke = 0.5 * (obj.solver_state.masses * (state.objects[0].velocities ** 2).sum(1)).sum()
    assert ke < 1e-4  # settled
    # slope fit on the free surface: max height per radial bin from the peak
    r = np.linalg.norm(pos[:, :2] - np.median(pos[:, :2], axis=0), axis=1)
    bins = np.linspace(0, r.max() + 1e-9, 10)
    which = np.digitize(r, bins) - 1
    heights, radii = [], []
    for b in range(10):
        sel = which == b
        if sel.sum() > 5:
            heights.append(pos[sel, 2].max())
            radii.append(r[sel].mean())
    heights, radii = np.asarray(heights), np.asarray(radii)
    slope, _ = np.polyfit(radii, heights, 1)
    angle = np.degrees(np.arctan(abs(slope)))
    assert angle <= material.friction_angle + 10.0
    # and the pile did spread into a pile rather than freeze as a column
    assert r.max() > 0.07


def test_drucker_prager_alpha_value():
    # alpha = sqrt(2/3) * 2 sin(45) / (3 - sin(45))
    expect = np.sqrt(2.0 / 3.0) * 2.0 * np.sin(np.radians(45.0)) / (3.0 - np.sin(np.radians(45.0)))
    assert abs(drucker_prager_alpha(45.0) - expect) < 1e-12


def test_escaped_particles_clamped_and_flagged():
    from physflow.physics.mpm import mpm_substep_arrays

    obj = make_object(LiquidMaterial(), np.array([[0.5, 0.5, 0.5]]),
                      velocities=np.array([[500.0, 0.0, 0.0]]))
    grid = MpmGrid((0.4, 0.4, 0.4), (0.6, 0.6, 0.6), 64)
    n = mpm_substep_arrays(obj.positions, obj.velocities, obj.solver_state,
                           obj.material, grid, np.zeros((1, 3)), np.zeros(3), 1e-2)
    assert n == 1
    assert np.isfinite(obj.positions).all()


def test_blowup_detection():
    pts = grid_block((0.0, 0.0, 0.2), (0.05, 0.05, 0.05), 0.01)
    obj = make_object(GranularMaterial(), pts)
    state = scene_with([obj], gravity=(0, 0, 0))
    cfg = SimConfig(dt=1e-2, substeps=1, blowup_limit=10.0)
    absurd = PointForce(np.array([0.0, 0.0, 0.2]), np.array([0.0, 0.0, 1e12]),
                        radius=1.0, duration=10.0)
    with pytest.raises(NumericalBlowup) as err:
        s = state
        for _ in range(50):
            s = physics_step(s, [absurd], cfg)
    assert err.value.object_index == 0


def test_grid_dims_bounded():
    grid = MpmGrid((0, 0, 0), (10.0, 10.0, 10.0), 64, max_dim=64)
    assert max(grid.dims) <= 64
    grid_small = MpmGrid((0, 0, 0), (0.5, 0.5, 0.5), 64, max_dim=64)
    assert abs(grid_small.dx - 1.0 / 64) < 1e-12


def test_particle_count_constant_across_steps():
    pts = grid_block((0.0, 0.0, 0.1), (0.06, 0.06, 0.06), 0.012)
    obj = make_object(GranularMaterial(), pts)
    state = scene_with([obj], background=ground(half=0.3))
    cfg = SimConfig(dt=2.5e-3, substeps=5)
    ws = PhysicsWorkspace(state, cfg)
    n0 = state.particle_count
    bg0 = state.background_positions.copy()
    for _ in range(20):
        state = physics_step(state, (), cfg, workspace=ws)
    assert state.particle_count == n0
    # background bit-identical across steps
    assert np.array_equal(state.background_positions, bg0)
