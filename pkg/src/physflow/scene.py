"""Shared domain types: cameras, materials, actions, dynamic objects, scene state.

All values are SI (meters, seconds, kilograms, newtons). Colors are floats in
[0, 1] internally and only quantized to u8 at the preview/wire boundary.
Types are plain values; copying them is always safe.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .errors import ShapeError

# Table defaults for the general simulation block.
DEFAULT_GRAVITY = (0.0, 0.0, -9.8)
DEFAULT_PARTICLE_SIZE = 1e-2

_SNAPSHOT_VERSION = 1


def _as_f64(a, shape, name: str) -> np.ndarray:
    out = np.asarray(a, dtype=np.float64)
    if out.shape != tuple(shape):
        raise ShapeError(f"{name}: expected shape {tuple(shape)}, got {out.shape}")
    return out


# ---------------------------------------------------------------------------
# Camera

@dataclass
class Camera:
    """Pinhole camera: intrinsics in pixels, extrinsics world->camera."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = _as_f64(self.rotation, (3, 3), "rotation")
        self.translation = _as_f64(self.translation, (3,), "translation")
        self.validate()

    def validate(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > 1e-6:
            raise ValueError(f"rotation not orthonormal (|R^T R - I| = {err:.2e})")

    def copy(self) -> "Camera":
        return replace(self, rotation=self.rotation.copy(), translation=self.translation.copy())

    def same_pose(self, other: "Camera") -> bool:
        return (
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
            and (self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            == (other.fx, other.fy, other.cx, other.cy, other.width, other.height)
        )


# ---------------------------------------------------------------------------
# Materials (defaults follow the simulation-parameter table)

@dataclass(frozen=True)
class RigidMaterial:
    mass: Optional[float] = None  # whole-object mass; derived from density when None
    density: float = 1000.0
    friction_coefficient: float = 0.1

    kind = "rigid"

    def __post_init__(self):
        _check_density(self.density)
        if self.mass is not None and self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.friction_coefficient < 0:
            raise ValueError("friction coefficient must be >= 0")


@dataclass(frozen=True)
class ElasticMaterial:
    density: float = 1000.0
    stretch_compliance: float = 0.0
    bending_compliance: float = 0.0
    volume_compliance: float = 0.0
    stretch_relaxation: float = 0.3
    bending_relaxation: float = 0.3
    volume_relaxation: float = 0.1

    kind = "elastic"

    def __post_init__(self):
        _check_density(self.density)
        _check_compliances(self.stretch_compliance, self.bending_compliance, self.volume_compliance)


@dataclass(frozen=True)
class ClothMaterial:
    density: float = 200.0
    stretch_compliance: float = 1e-7
    bending_compliance: float = 1e-5

    kind = "cloth"

    def __post_init__(self):
        _check_density(self.density)
        _check_compliances(self.stretch_compliance, self.bending_compliance)


@dataclass(frozen=True)
class SmokeMaterial:
    density: float = 1.0
    viscosity_coefficient: float = 0.1

    kind = "smoke"

    def __post_init__(self):
        _check_density(self.density)
        if self.viscosity_coefficient < 0:
            raise ValueError("viscosity must be >= 0")


@dataclass(frozen=True)
class LiquidMaterial:
    density: float = 1000.0
    youngs_modulus: float = 1e7
    poissons_ratio: float = 0.2

    kind = "liquid"

    def __post_init__(self):
        _check_density(self.density)
        _check_elastic_moduli(self.youngs_modulus, self.poissons_ratio)


@dataclass(frozen=True)
class GranularMaterial:
    density: float = 1500.0
    youngs_modulus: float = 1e6
    poissons_ratio: float = 0.2
    friction_angle: float = 45.0  # degrees

    kind = "granular"

    def __post_init__(self):
        _check_density(self.density)
        _check_elastic_moduli(self.youngs_modulus, self.poissons_ratio)
        if not (0 <= self.friction_angle < 90):
            raise ValueError("friction angle must be in [0, 90) degrees")


MaterialParams = Union[
    RigidMaterial, ElasticMaterial, ClothMaterial, SmokeMaterial, LiquidMaterial, GranularMaterial
]

MATERIAL_CLASSES = {
    "rigid": RigidMaterial,
    "elastic": ElasticMaterial,
    "cloth": ClothMaterial,
    "smoke": SmokeMaterial,
    "liquid": LiquidMaterial,
    "granular": GranularMaterial,
}


def make_material(material_class: str, **params) -> MaterialParams:
    """Construct a material from its class name plus keyword overrides."""
    try:
        cls = MATERIAL_CLASSES[material_class.lower()]
    except KeyError:
        raise ValueError(f"unknown material class {material_class!r}") from None
    return cls(**params)


def _check_density(density: float) -> None:
    if not density > 0:
        raise ValueError("density must be positive")


def _check_compliances(*values: float) -> None:
    if any(v < 0 for v in values):
        raise ValueError("compliances must be >= 0")


def _check_elastic_moduli(e: float, nu: float) -> None:
    if not e > 0:
        raise ValueError("Young's modulus must be positive")
    if not (0 <= nu < 0.5):
        raise ValueError("Poisson's ratio must be in [0, 0.5)")


# ---------------------------------------------------------------------------
# Actions

@dataclass
class PointForce:
    position: np.ndarray  # (3,) m
    force: np.ndarray  # (3,) N
    radius: float  # m
    duration: float  # s

    def __post_init__(self):
        self.position = _as_f64(self.position, (3,), "position")
        self.force = _as_f64(self.force, (3,), "force")
        if not self.radius > 0:
            raise ValueError("point force radius must be > 0")
        if not self.duration > 0:
            raise ValueError("point force duration must be > 0")


@dataclass
class ForceField:
    acceleration: np.ndarray  # (3,) m/s^2
    region: Optional[np.ndarray] = None  # (2, 3) axis-aligned box (min, max), m

    def __post_init__(self):
        self.acceleration = _as_f64(self.acceleration, (3,), "acceleration")
        if self.region is not None:
            self.region = _as_f64(self.region, (2, 3), "region")


@dataclass
class GripperCommand:
    ee_position: np.ndarray  # (3,) m
    ee_orientation: np.ndarray  # (4,) unit quaternion wxyz
    gripper_opening: float  # in [0, 1]

    def __post_init__(self):
        self.ee_position = _as_f64(self.ee_position, (3,), "ee_position")
        self.ee_orientation = _as_f64(self.ee_orientation, (4,), "ee_orientation")
        norm = float(np.linalg.norm(self.ee_orientation))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"gripper orientation must be a unit quaternion (norm {norm:.8f})")
        if not (0.0 <= self.gripper_opening <= 1.0):
            raise ValueError("gripper opening must be in [0, 1]")


@dataclass
class CameraPose:
    camera: Camera


Action = Union[PointForce, ForceField, GripperCommand, CameraPose]


# ---------------------------------------------------------------------------
# Dynamic objects and their per-solver state

@dataclass
class RigidState:
    rest_positions: np.ndarray  # (N, 3)
    rest_com: np.ndarray  # (3,)
    masses: np.ndarray  # (N,)


@dataclass
class PbdState:
    masses: np.ndarray  # (N,)
    edges: np.ndarray  # (E, 2) int64
    rest_lengths: np.ndarray  # (E,)
    bend_pairs: np.ndarray  # (B, 2) int64, second-ring distance constraints
    rest_bend: np.ndarray  # (B,)
    tets: np.ndarray  # (T, 4) int64, empty for cloth/smoke
    rest_volumes: np.ndarray  # (T,)
    rest_density: float = 0.0  # smoke only, SPH estimate at build time
    kernel_radius: float = 0.0  # smoke only


@dataclass
class MpmState:
    F: np.ndarray  # (N, 3, 3) deformation gradients
    volumes: np.ndarray  # (N,)
    masses: np.ndarray  # (N,)
    C: np.ndarray = None  # (N, 3, 3) APIC affine velocity field

    def __post_init__(self):
        if self.C is None:
            self.C = np.zeros_like(self.F)


SolverState = Union[RigidState, PbdState, MpmState]


@dataclass
class DynamicObject:
    positions: np.ndarray  # (N, 3) m
    velocities: np.ndarray  # (N, 3) m/s
    colors: np.ndarray  # (N, 3) in [0, 1]
    material: MaterialParams
    solver_state: Optional[SolverState] = None
    name: str = ""

    def __post_init__(self):
        n = len(self.positions)
        self.positions = _as_f64(self.positions, (n, 3), "positions")
        self.velocities = _as_f64(self.velocities, (n, 3), "velocities")
        self.colors = _as_f64(self.colors, (n, 3), "colors")
        for arr, name in ((self.positions, "positions"), (self.velocities, "velocities"), (self.colors, "colors")):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} must be finite")

    @property
    def count(self) -> int:
        return int(self.positions.shape[0])

    @property
    def masses(self) -> np.ndarray:
        return self.solver_state.masses

    def copy(self) -> "DynamicObject":
        new = DynamicObject(
            self.positions.copy(), self.velocities.copy(), self.colors.copy(), self.material, None, self.name
        )
        new.solver_state = _copy_solver_state(self.solver_state)
        return new


def _copy_solver_state(st: Optional[SolverState]) -> Optional[SolverState]:
    if st is None:
        return None
    if isinstance(st, RigidState):
        return RigidState(st.rest_positions.copy(), st.rest_com.copy(), st.masses.copy())
    if isinstance(st, PbdState):
        return PbdState(
            st.masses.copy(), st.edges.copy(), st.rest_lengths.copy(), st.bend_pairs.copy(),
            st.rest_bend.copy(), st.tets.copy(), st.rest_volumes.copy(), st.rest_density, st.kernel_radius,
        )
    return MpmState(st.F.copy(), st.volumes.copy(), st.masses.copy(), st.C.copy())


# ---------------------------------------------------------------------------
# Scene state

@dataclass
class SceneState:
    """Static background point cloud plus dynamic objects and the render camera."""

    background_positions: np.ndarray  # (Nb, 3), never mutated by the engine
    background_colors: np.ndarray  # (Nb, 3) in [0, 1]
    objects: list[DynamicObject]
    camera: Camera
    sim_time: float = 0.0
    gravity: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_GRAVITY))

    def __post_init__(self):
        nb = len(self.background_positions)
        self.background_positions = _as_f64(self.background_positions, (nb, 3), "background_positions")
        self.background_colors = _as_f64(self.background_colors, (nb, 3), "background_colors")
        self.gravity = _as_f64(self.gravity, (3,), "gravity")

    @property
    def particle_count(self) -> int:
        return sum(o.count for o in self.objects)

    def copy(self) -> "SceneState":
        return SceneState(
            self.background_positions,  # static by contract, shared on purpose
            self.background_colors,
            [o.copy() for o in self.objects],
            self.camera.copy(),
            self.sim_time,
            self.gravity.copy(),
        )


# ---------------------------------------------------------------------------
# Per-frame conditioning output

@dataclass
class ConditioningFrame:
    flow: np.ndarray  # (H, W, 2) f32, pixels/frame; zero where coverage is False
    preview: np.ndarray  # (H, W, 3) u8
    depth_buffer: np.ndarray  # (H, W) f32, +inf where empty
    coverage: np.ndarray  # (H, W) bool
    warped_noise: Optional[np.ndarray] = None  # (h, w, c) f32
    frame_index: int = 0
    sim_time: float = 0.0


# ---------------------------------------------------------------------------
# Snapshot serialization (bit-exact round trip)

def _material_to_dict(m: MaterialParams) -> dict:
    d = {k: v for k, v in m.__dict__.items()}
    d["class"] = m.kind
    return d


def _material_from_dict(d: dict) -> MaterialParams:
    d = dict(d)
    kind = d.pop("class")
    return make_material(kind, **d)


def save_scene(state: SceneState, fp) -> None:
    """Serialize a SceneState to an npz stream; round trip is bit-identical."""
    arrays: dict[str, np.ndarray] = {
        "background_positions": state.background_positions,
        "background_colors": state.background_colors,
        "camera_rotation": state.camera.rotation,
        "camera_translation": state.camera.translation,
        "gravity": state.gravity,
    }
    meta: dict = {
        "version": _SNAPSHOT_VERSION,
        "sim_time": state.sim_time,
        "camera": {
            "fx": state.camera.fx, "fy": state.camera.fy, "cx": state.camera.cx,
            "cy": state.camera.cy, "width": state.camera.width, "height": state.camera.height,
        },
        "objects": [],
    }
    for i, obj in enumerate(state.objects):
        p = f"obj{i}_"
        arrays[p + "positions"] = obj.positions
        arrays[p + "velocities"] = obj.velocities
        arrays[p + "colors"] = obj.colors
        info = {"material": _material_to_dict(obj.material), "name": obj.name, "solver": None}
        st = obj.solver_state
        if isinstance(st, RigidState):
            info["solver"] = "rigid"
            arrays[p + "rest_positions"] = st.rest_positions
            arrays[p + "rest_com"] = st.rest_com
            arrays[p + "masses"] = st.masses
        elif isinstance(st, PbdState):
            info["solver"] = "pbd"
            info["rest_density"] = st.rest_density
            info["kernel_radius"] = st.kernel_radius
            arrays[p + "masses"] = st.masses
            arrays[p + "edges"] = st.edges
            arrays[p + "rest_lengths"] = st.rest_lengths
            arrays[p + "bend_pairs"] = st.bend_pairs
            arrays[p + "rest_bend"] = st.rest_bend
            arrays[p + "tets"] = st.tets
            arrays[p + "rest_volumes"] = st.rest_volumes
        elif isinstance(st, MpmState):
            info["solver"] = "mpm"
            arrays[p + "F"] = st.F
            arrays[p + "volumes"] = st.volumes
            arrays[p + "masses"] = st.masses
            arrays[p + "apic"] = st.C
        meta["objects"].append(info)
    arrays["meta_json"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    np.savez(fp, **arrays)


def load_scene(fp) -> SceneState:
    with np.load(fp, allow_pickle=False) as z:
        meta = json.loads(bytes(z["meta_json"]).decode("utf-8"))
        if meta["version"] != _SNAPSHOT_VERSION:
            from .errors import IncompatibleSnapshot

            raise IncompatibleSnapshot(f"snapshot version {meta['version']} != {_SNAPSHOT_VERSION}")
        cam = Camera(rotation=z["camera_rotation"], translation=z["camera_translation"], **meta["camera"])
        objects = []
        for i, info in enumerate(meta["objects"]):
            p = f"obj{i}_"
            obj = DynamicObject(
                z[p + "positions"], z[p + "velocities"], z[p + "colors"],
                _material_from_dict(info["material"]), None, info["name"],
            )
            if info["solver"] == "rigid":
                obj.solver_state = RigidState(z[p + "rest_positions"], z[p + "rest_com"], z[p + "masses"])
            elif info["solver"] == "pbd":
                obj.solver_state = PbdState(
                    z[p + "masses"], z[p + "edges"], z[p + "rest_lengths"], z[p + "bend_pairs"],
                    z[p + "rest_bend"], z[p + "tets"], z[p + "rest_volumes"],
                    info["rest_density"], info["kernel_radius"],
                )
            elif info["solver"] == "mpm":
                obj.solver_state = MpmState(z[p + "F"], z[p + "volumes"], z[p + "masses"], z[p + "apic"])
            objects.append(obj)
        return SceneState(
            z["background_positions"], z["background_colors"], objects, cam,
            meta["sim_time"], z["gravity"],
        )


def scene_to_bytes(state: SceneState) -> bytes:
    buf = io.BytesIO()
    save_scene(state, buf)
    return buf.getvalue()


def scene_from_bytes(data: bytes) -> SceneState:
    return load_scene(io.BytesIO(data))


def scenes_equal(a: SceneState, b: SceneState) -> bool:
    """Bitwise equality of everything the simulation evolves."""
    if a.sim_time != b.sim_time or len(a.objects) != len(b.objects):
        return False
    if not (
        np.array_equal(a.background_positions, b.background_positions)
        and np.array_equal(a.gravity, b.gravity)
        and a.camera.same_pose(b.camera)
    ):
        return False
    for oa, ob in zip(a.objects, b.objects):
        if not (
            np.array_equal(oa.positions, ob.positions)
            and np.array_equal(oa.velocities, ob.velocities)
        ):
            return False
    return True
