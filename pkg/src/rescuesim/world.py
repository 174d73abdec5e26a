"""Shared world model: categories, object instances, scenes, grids, scoring value.

Scene files are JSON documents with the top-level keys
``version, task, seed, bounds, statics, objects, agent_spawn, hazard``; see
``data/scene.schema.json``. Category pools are JSON lists and are resolved by
name when a scene is loaded.
"""

from __future__ import annotations

import copy
import enum
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from .vec import Vec3, vec

SCENE_VERSION = 1
TASKS = ("fire", "flood", "wind")
FLOOD_EDGES = ("xmin", "xmax", "zmin", "zmax")
DEFAULT_CELL_SIZE = 0.25
STATIC_OVERLAP_TOLERANCE = 0.01


class SceneError(ValueError):
    """Raised when a scene document or Scene object is invalid."""


class Status(str, enum.Enum):
    NORMAL = "normal"
    BURNING = "burning"
    BURNT = "burnt"


_STATUS_ORDER = {Status.NORMAL: 0, Status.BURNING: 1, Status.BURNT: 2}


def status_rank(status: Status) -> int:
    return _STATUS_ORDER[status]


@dataclass(frozen=True)
class ObjectCategory:
    name: str
    value: float
    waterproof: bool
    ignition_point: float
    burn_duration: int
    density: float
    drag_coefficient: float
    wind_susceptible: bool
    # default half extents used by procedural generation; not part of scoring
    size: tuple[float, float, float] = (0.1, 0.1, 0.1)

    def __post_init__(self) -> None:
        if not self.value > 0:
            raise SceneError(f"category {self.name!r}: value must be > 0")
        if not self.burn_duration > 0:
            raise SceneError(f"category {self.name!r}: burn_duration must be > 0")
        if not (self.density > 0 and self.drag_coefficient > 0):
            raise SceneError(f"category {self.name!r}: density and drag_coefficient must be > 0")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ObjectCategory":
        required = ("name", "value", "waterproof", "ignition_point", "burn_duration",
                    "density", "drag_coefficient", "wind_susceptible")
        for key in required:
            if key not in d:
                raise SceneError(f"category record missing field {key!r}")
        return cls(
            name=str(d["name"]),
            value=float(d["value"]),
            waterproof=bool(d["waterproof"]),
            ignition_point=float(d["ignition_point"]),
            burn_duration=int(d["burn_duration"]),
            density=float(d["density"]),
            drag_coefficient=float(d["drag_coefficient"]),
            wind_susceptible=bool(d["wind_susceptible"]),
            size=tuple(float(v) for v in d.get("size", (0.1, 0.1, 0.1))),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "value": self.value,
            "waterproof": self.waterproof,
            "ignition_point": self.ignition_point,
            "burn_duration": self.burn_duration,
            "density": self.density,
            "drag_coefficient": self.drag_coefficient,
            "wind_susceptible": self.wind_susceptible,
            "size": list(self.size),
        }


def load_category_pool(path: str | os.PathLike) -> list[ObjectCategory]:
    with open(path) as f:
        records = json.load(f)
    if not isinstance(records, list):
        raise SceneError(f"{path}: category pool must be a list")
    return [ObjectCategory.from_dict(r) for r in records]


def _data_path(name: str) -> Path:
    return Path(str(resources.files("rescuesim") / "data" / name))


@lru_cache(maxsize=None)
def builtin_pool(kind: str) -> tuple[ObjectCategory, ...]:
    """Shipped stand-in pools: ``fire_flood`` (22), ``wind`` (11), ``containers``.

    The attribute values are hand-assigned placeholders, not measured data.
    """
    fname = {"fire_flood": "pool_fire_flood.json", "wind": "pool_wind.json",
             "containers": "containers.json"}[kind]
    return tuple(load_category_pool(_data_path(fname)))


def pool_for_task(task: str) -> tuple[ObjectCategory, ...]:
    return builtin_pool("wind" if task == "wind" else "fire_flood")


@lru_cache(maxsize=None)
def builtin_categories() -> dict[str, ObjectCategory]:
    out: dict[str, ObjectCategory] = {}
    for kind in ("fire_flood", "wind", "containers"):
        for cat in builtin_pool(kind):
            if cat.name in out and out[cat.name] != cat:
                raise SceneError(f"conflicting definitions for category {cat.name!r}")
            out[cat.name] = cat
    return out


@dataclass
class ObjectInstance:
    id: int
    category: ObjectCategory
    position: Vec3
    half_extents: Vec3
    heading: float = 0.0
    is_target: bool = False
    is_container: bool = False
    # runtime state below; not serialized in scene files
    velocity: Vec3 = Vec3()  # m/s
    yaw_rate: float = 0.0  # deg/s
    status: Status = Status.NORMAL
    temperature: Optional[float] = None
    damaged: bool = False
    held_by: Optional[str] = None
    rescued: bool = False
    lost: bool = False
    ignition_frame: Optional[int] = None
    burnt_frame: Optional[int] = None
    # position used by hazard fields once the object leaves the floor (picked up)
    anchor: Optional[Vec3] = None

    @property
    def volume(self) -> float:
        h = self.half_extents
        return 8.0 * h.x * h.y * h.z

    @property
    def mass(self) -> float:
        return self.category.density * self.volume

    @property
    def bottom(self) -> float:
        return self.position.y - self.half_extents.y

    @property
    def top(self) -> float:
        return self.position.y + self.half_extents.y

    @property
    def in_custody(self) -> bool:
        """Held by the agent or already deposited in a safe zone."""
        return self.held_by is not None or self.rescued

    @property
    def active(self) -> bool:
        """Still part of the physical simulation."""
        return not (self.in_custody or self.lost)

    @property
    def hazard_position(self) -> Vec3:
        return self.anchor if self.anchor is not None else self.position

    def set_status(self, status: Status) -> None:
        if status_rank(status) < status_rank(self.status):
            raise ValueError(f"object {self.id}: illegal status transition {self.status.value} -> {status.value}")
        self.status = status

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "category": self.category.name,
            "position": list(self.position),
            "heading": self.heading,
            "half_extents": list(self.half_extents),
            "is_target": self.is_target,
            "is_container": self.is_container,
        }


@dataclass(frozen=True)
class StaticBox:
    name: str
    center: Vec3
    half_extents: Vec3

    @property
    def top(self) -> float:
        return self.center.y + self.half_extents.y

    def footprint_contains(self, x: float, z: float, margin: float = 0.0) -> bool:
        return (abs(x - self.center.x) < self.half_extents.x + margin
                and abs(z - self.center.z) < self.half_extents.z + margin)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "center": list(self.center), "half_extents": list(self.half_extents)}


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned floor rectangle in the x/z plane."""

    xmin: float
    zmin: float
    xmax: float
    zmax: float

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def depth(self) -> float:
        return self.zmax - self.zmin

    def contains(self, x: float, z: float, margin: float = 0.0) -> bool:
        return (self.xmin - margin <= x <= self.xmax + margin
                and self.zmin - margin <= z <= self.zmax + margin)

    def to_list(self) -> list[float]:
        return [self.xmin, self.zmin, self.xmax, self.zmax]


@dataclass(frozen=True)
class HazardSpec:
    task: str
    # fire: floor points (x, z) where the fire starts
    fire_sources: tuple[tuple[float, float], ...] = ()
    # flood: the scene edge water enters from
    flood_edge: str = "xmin"
    # wind: horizontal unit direction of the wind
    wind_direction: Vec3 = Vec3(1.0, 0.0, 0.0)

    def to_dict(self) -> dict[str, Any]:
        if self.task == "fire":
            return {"task": "fire", "fire_sources": [list(p) for p in self.fire_sources]}
        if self.task == "flood":
            return {"task": "flood", "flood_edge": self.flood_edge}
        return {"task": "wind", "wind_direction": list(self.wind_direction)}


@dataclass
class Scene:
    task: str
    seed: int
    bounds: Bounds
    statics: list[StaticBox] = field(default_factory=list)
    objects: list[ObjectInstance] = field(default_factory=list)
    agent_spawn: tuple[Vec3, float] = (Vec3(), 0.0)
    hazard: HazardSpec = field(default_factory=lambda: HazardSpec("fire"))
    version: int = SCENE_VERSION

    def object_by_id(self, oid: int) -> ObjectInstance:
        for obj in self.objects:
            if obj.id == oid:
                return obj
        raise KeyError(f"no object with id {oid}")

    @property
    def targets(self) -> list[ObjectInstance]:
        return [o for o in self.objects if o.is_target]

    @property
    def containers(self) -> list[ObjectInstance]:
        return [o for o in self.objects if o.is_container]

    def copy(self) -> "Scene":
        return copy.deepcopy(self)

    def validate(self) -> None:
        validate_scene(self)

    def to_dict(self) -> dict[str, Any]:
        pos, heading = self.agent_spawn
        return {
            "version": self.version,
            "task": self.task,
            "seed": self.seed,
            "bounds": self.bounds.to_list(),
            "statics": [s.to_dict() for s in self.statics],
            "objects": [o.to_dict() for o in self.objects],
            "agent_spawn": {"position": list(pos), "heading": heading},
            "hazard": self.hazard.to_dict(),
        }


def validate_scene(scene: Scene) -> None:
    if scene.task not in TASKS:
        raise SceneError(f"task: unknown task {scene.task!r}")
    if scene.hazard.task != scene.task:
        raise SceneError(f"hazard.task: {scene.hazard.task!r} does not match scene task {scene.task!r}")
    b = scene.bounds
    if not (b.xmax > b.xmin and b.zmax > b.zmin):
        raise SceneError("bounds: empty floor rectangle")
    if not all(math.isfinite(v) for v in b.to_list()):
        raise SceneError("bounds: non-finite value")
    if not 0 <= scene.seed < 2**64:
        raise SceneError("seed: must be a 64-bit unsigned integer")

    for s in scene.statics:
        if not (s.center.is_finite() and s.half_extents.is_finite()):
            raise SceneError(f"static {s.name!r}: non-finite geometry")
        if min(s.half_extents) <= 0:
            raise SceneError(f"static {s.name!r}: half_extents must be positive")
    for i, a in enumerate(scene.statics):
        for bbox in scene.statics[i + 1:]:
            depth = min(
                a.half_extents[k] + bbox.half_extents[k] - abs(a.center[k] - bbox.center[k])
                for k in range(3)
            )
            if depth > STATIC_OVERLAP_TOLERANCE:
                raise SceneError(f"statics {a.name!r} and {bbox.name!r} interpenetrate by {depth:.3f} m")

    seen: set[int] = set()
    for o in scene.objects:
        if o.id in seen:
            raise SceneError(f"object {o.id}: duplicate id")
        seen.add(o.id)
        if not (o.position.is_finite() and o.half_extents.is_finite() and math.isfinite(o.heading)):
            raise SceneError(f"object {o.id}: non-finite pose")
        if min(o.half_extents) <= 0:
            raise SceneError(f"object {o.id}: half_extents must be positive")
        if not b.contains(o.position.x, o.position.z):
            raise SceneError(f"object {o.id}: position outside scene bounds")

    pos, heading = scene.agent_spawn
    if not (pos.is_finite() and math.isfinite(heading)):
        raise SceneError("agent_spawn: non-finite pose")
    if not b.contains(pos.x, pos.z):
        raise SceneError("agent_spawn: outside scene bounds")
    for s in scene.statics:
        if s.footprint_contains(pos.x, pos.z) and s.center.y - s.half_extents.y < 1.0:
            raise SceneError(f"agent_spawn: inside static box {s.name!r}")

    if scene.task == "flood" and scene.hazard.flood_edge not in FLOOD_EDGES:
        raise SceneError(f"hazard.flood_edge: must be one of {FLOOD_EDGES}")
    if scene.task == "wind":
        if not scene.hazard.wind_direction.is_finite():
            raise SceneError("hazard.wind_direction: non-finite")


# -- serialization -----------------------------------------------------------

def _require(d: dict, key: str, where: str) -> Any:
    if not isinstance(d, dict) or key not in d:
        raise SceneError(f"{where}{key}: missing field")
    return d[key]


def _vec_field(value: Any, where: str) -> Vec3:
    if not (isinstance(value, (list, tuple)) and len(value) == 3):
        raise SceneError(f"{where}: expected a 3-element list")
    try:
        return vec(value)
    except (TypeError, ValueError) as exc:
        raise SceneError(f"{where}: {exc}") from None


def scene_from_dict(d: dict[str, Any], categories: Optional[dict[str, ObjectCategory]] = None) -> Scene:
    """Build and validate a Scene from a parsed scene document."""
    cats = categories if categories is not None else builtin_categories()
    version = _require(d, "version", "")
    if version != SCENE_VERSION:
        raise SceneError(f"version: unsupported scene version {version!r}")
    task = _require(d, "task", "")
    seed = _require(d, "seed", "")
    if not isinstance(seed, int):
        raise SceneError("seed: must be an integer")
    raw_bounds = _require(d, "bounds", "")
    if not (isinstance(raw_bounds, list) and len(raw_bounds) == 4):
        raise SceneError("bounds: expected [xmin, zmin, xmax, zmax]")
    bounds = Bounds(*(float(v) for v in raw_bounds))

    statics = []
    for i, s in enumerate(_require(d, "statics", "")):
        where = f"statics[{i}]."
        statics.append(StaticBox(
            name=str(_require(s, "name", where)),
            center=_vec_field(_require(s, "center", where), where + "center"),
            half_extents=_vec_field(_require(s, "half_extents", where), where + "half_extents"),
        ))

    objects = []
    for i, o in enumerate(_require(d, "objects", "")):
        where = f"objects[{i}]."
        cname = _require(o, "category", where)
        if cname not in cats:
            raise SceneError(f"{where}category: unknown category {cname!r}")
        oid = _require(o, "id", where)
        if not isinstance(oid, int):
            raise SceneError(f"{where}id: must be an integer")
        objects.append(ObjectInstance(
            id=oid,
            category=cats[cname],
            position=_vec_field(_require(o, "position", where), where + "position"),
            half_extents=_vec_field(_require(o, "half_extents", where), where + "half_extents"),
            heading=float(_require(o, "heading", where)),
            is_target=bool(_require(o, "is_target", where)),
            is_container=bool(_require(o, "is_container", where)),
        ))

    spawn = _require(d, "agent_spawn", "")
    agent_spawn = (_vec_field(_require(spawn, "position", "agent_spawn."), "agent_spawn.position"),
                   float(_require(spawn, "heading", "agent_spawn.")))

    h = _require(d, "hazard", "")
    htask = _require(h, "task", "hazard.")
    if htask == "fire":
        sources = tuple((float(p[0]), float(p[1])) for p in _require(h, "fire_sources", "hazard."))
        hazard = HazardSpec("fire", fire_sources=sources)
    elif htask == "flood":
        hazard = HazardSpec("flood", flood_edge=str(_require(h, "flood_edge", "hazard.")))
    elif htask == "wind":
        hazard = HazardSpec("wind", wind_direction=_vec_field(_require(h, "wind_direction", "hazard."),
                                                                "hazard.wind_direction"))
    else:
        raise SceneError(f"hazard.task: unknown task {htask!r}")

    scene = Scene(task=task, seed=seed, bounds=bounds, statics=statics, objects=objects,
                  agent_spawn=agent_spawn, hazard=hazard, version=version)
    validate_scene(scene)
    return scene


def dumps_scene(scene: Scene) -> str:
    """Canonical text form: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(scene.to_dict(), sort_keys=True, indent=2) + "\n"


def load_scene(path: str | os.PathLike,
               categories: Optional[dict[str, ObjectCategory]] = None) -> Scene:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"scene file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{p}: not valid JSON ({exc})") from None
    return scene_from_dict(data, categories)


def save_scene(scene: Scene, path: str | os.PathLike) -> None:
    """Validate, then write atomically so a refused scene never leaves a partial file."""
    validate_scene(scene)
    text = dumps_scene(scene)
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=".scene-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- grid --------------------------------------------------------------------

@dataclass
class GridMap:
    """Floor raster. ``height_of[i, j]`` covers x-cell i and z-cell j."""

    cell_size: float
    origin: Vec3
    width: int
    height: int
    height_of: np.ndarray
    explored: np.ndarray

    def cell_of(self, x: float, z: float) -> tuple[int, int]:
        i = int(math.floor((x - self.origin.x) / self.cell_size))
        j = int(math.floor((z - self.origin.z) / self.cell_size))
        return min(max(i, 0), self.width - 1), min(max(j, 0), self.height - 1)

    def contains_cell(self, i: int, j: int) -> bool:
        return 0 <= i < self.width and 0 <= j < self.height

    def center(self, i: int, j: int) -> Vec3:
        return Vec3(self.origin.x + (i + 0.5) * self.cell_size, 0.0,
                    self.origin.z + (j + 0.5) * self.cell_size)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.origin.x + (np.arange(self.width) + 0.5) * self.cell_size
        zs = self.origin.z + (np.arange(self.height) + 0.5) * self.cell_size
        return np.meshgrid(xs, zs, indexing="ij")


def empty_grid(bounds: Bounds, cell_size: float = DEFAULT_CELL_SIZE) -> GridMap:
    if not cell_size > 0:
        raise ValueError("cell_size must be > 0")
    width = max(1, int(math.ceil(bounds.width / cell_size - 1e-9)))
    height = max(1, int(math.ceil(bounds.depth / cell_size - 1e-9)))
    return GridMap(
        cell_size=cell_size,
        origin=Vec3(bounds.xmin, 0.0, bounds.zmin),
        width=width,
        height=height,
        height_of=np.zeros((width, height)),
        explored=np.zeros((width, height), dtype=bool),
    )


def _cell_span(lo: float, hi: float, origin: float, cell: float, n: int) -> tuple[int, int]:
    # cells whose open interval intersects (lo, hi); touching edges do not count
    a = int(math.floor((lo - origin) / cell + 1e-9))
    b = int(math.ceil((hi - origin) / cell - 1e-9))
    return max(a, 0), min(b, n)


def paint_box(grid: GridMap, center: Vec3, half: Vec3, top: float) -> None:
    i0, i1 = _cell_span(center.x - half.x, center.x + half.x, grid.origin.x, grid.cell_size, grid.width)
    j0, j1 = _cell_span(center.z - half.z, center.z + half.z, grid.origin.z, grid.cell_size, grid.height)
    if i0 < i1 and j0 < j1:
        block = grid.height_of[i0:i1, j0:j1]
        np.maximum(block, top, out=block)


def rasterize_grid(scene: Scene, cell_size: float = DEFAULT_CELL_SIZE, *,
                   include_objects: bool = True) -> GridMap:
    """Per-cell maximum height of static boxes and free-standing objects."""
    grid = empty_grid(scene.bounds, cell_size)
    for s in scene.statics:
        paint_box(grid, s.center, s.half_extents, max(s.top, 0.0))
    if include_objects:
        for o in scene.objects:
            if o.active:
                paint_box(grid, o.position, o.half_extents, max(o.top, 0.0))
    return grid


def iter_ids(objs: Iterable[ObjectInstance]) -> list[int]:
    return [o.id for o in objs]


def effective_value(obj: ObjectInstance) -> float:
    """Scoring value: full category value, or half of it once damaged."""
    v = obj.category.value
    return v / 2.0 if obj.damaged else v
