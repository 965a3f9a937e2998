"""Coupled multi-material physics: shape-matching rigid bodies, XPBD for
elastic/cloth/smoke, MPM for liquid/granular, and contact coupling."""

from .mpm import MpmGrid, mpm_substep
from .pbd import pbd_substep
from .rigid import rigid_substep
from .step import PhysicsWorkspace, SimConfig, physics_step, resolve_collisions

__all__ = [
    "MpmGrid", "PhysicsWorkspace", "SimConfig", "mpm_substep", "pbd_substep",
    "physics_step", "resolve_collisions", "rigid_substep",
]
