"""Invariant checks shared by the property tests and the scenario runner's
summary report, so the CLI asserts exactly what the test suite asserts."""

from __future__ import annotations

import numpy as np

from .scene import ConditioningFrame, SceneState


def frame_invariants(cond: ConditioningFrame) -> dict:
    """Per-frame contract: zero flow and +inf depth outside coverage, finite
    depth inside, finite flow everywhere."""
    cov = cond.coverage
    uncovered_flow = cond.flow[~cov]
    return {
        "flow_zero_uncovered": bool((uncovered_flow == 0).all()),
        "depth_finite_iff_covered": bool(
            np.isfinite(cond.depth_buffer[cov]).all()
            and np.isinf(cond.depth_buffer[~cov]).all()
        ),
        "flow_finite": bool(np.isfinite(cond.flow).all()),
        "nan_count": int(np.isnan(cond.flow).sum() + np.isnan(cond.depth_buffer[cov]).sum()),
    }


def total_momentum(state: SceneState) -> np.ndarray:
    mom = np.zeros(3)
    for obj in state.objects:
        mom += (obj.masses[:, None] * obj.velocities).sum(0)
    return mom


def kinetic_energy(state: SceneState) -> float:
    ke = 0.0
    for obj in state.objects:
        ke += 0.5 * float((obj.masses * (obj.velocities ** 2).sum(1)).sum())
    return ke


def momentum_drift(history: list[np.ndarray]) -> float:
    """Max relative drift of total momentum against the first frame."""
    if len(history) < 2:
        return 0.0
    ref = history[0]
    scale = max(float(np.abs(ref).max()), 1e-12)
    return max(float(np.abs(m - ref).max()) / scale for m in history[1:])


def state_nan_count(state: SceneState) -> int:
    n = 0
    for obj in state.objects:
        n += int((~np.isfinite(obj.positions)).sum() + (~np.isfinite(obj.velocities)).sum())
    return n


def settling_ratio(energies: list[float]) -> float:
    """Final kinetic energy as a fraction of the peak (settling indicator)."""
    if not energies:
        return 0.0
    peak = max(energies)
    if peak <= 0:
        return 0.0
    return energies[-1] / peak
