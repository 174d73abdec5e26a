"""Seeded scene and dataset generation from hand-authored box-furniture room templates."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import rng as rngmod
from .navigation import plan_path
from .vec import Vec3, heading_to
from .world import (Bounds, HazardSpec, ObjectCategory, ObjectInstance, Scene, StaticBox, builtin_pool,
                    dumps_scene, pool_for_task, rasterize_grid, validate_scene)

MAX_PLACEMENT_ATTEMPTS = 1000
MAX_SCENE_ATTEMPTS = 50
FURNITURE_GAP = 0.6
SPAWN_CLEARANCE = 0.5
# surfaces higher than this, or deeper than this from every edge, get no objects
MAX_SURFACE_TOP = 1.0
MAX_SURFACE_HALF_DEPTH = 0.45
AGENT_BLOCK_HEIGHT = 0.3
APPROACH_RADIUS = 0.8


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class FurnitureSpec:
    name: str
    half_extents: tuple[float, float, float]


@dataclass(frozen=True)
class RoomTemplate:
    name: str
    size: tuple[float, float]
    furniture: tuple[FurnitureSpec, ...] = ()

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RoomTemplate":
        furn = tuple(FurnitureSpec(f["name"], tuple(float(v) for v in f["half_extents"]))
                     for f in d.get("furniture", ()))
        w, h = (float(v) for v in d["size"])
        if w <= 0 or h <= 0:
            raise GenerationError(f"template {d['name']!r}: size must be positive")
        return cls(str(d["name"]), (w, h), furn)


def builtin_templates(task: str) -> list[RoomTemplate]:
    """Four indoor rooms for fire/flood, four outdoor regions for wind."""
    text = (resources.files("rescuesim") / "data" / "rooms.json").read_text()
    data = json.loads(text)
    kind = "outdoor" if task == "wind" else "indoor"
    return [RoomTemplate.from_dict(d) for d in data[kind]]


@dataclass
class GenConfig:
    task: str
    room_templates: list[RoomTemplate] = field(default_factory=list)
    target_category_count: int = 4
    instances_per_category: tuple[int, int] = (1, 3)
    distractor_count: tuple[int, int] = (3, 6)
    surface_probability: float = 0.35
    fire_source_count: tuple[int, int] = (2, 4)
    container_count: tuple[int, int] = (1, 2)
    scenes_per_room: int = 25
    # index of the room whose scenes form the test split
    test_room: int = -1
    fire_source_min_spawn_distance: float = 2.0

    def __post_init__(self) -> None:
        if not self.room_templates:
            self.room_templates = builtin_templates(self.task)

    @property
    def pool(self) -> tuple[ObjectCategory, ...]:
        return pool_for_task(self.task)


def _rand_range(rng: np.random.Generator, lo_hi: tuple[int, int]) -> int:
    lo, hi = lo_hi
    return int(rng.integers(lo, hi + 1))


def _overlap_xz(c1: Vec3, h1: Vec3, c2: Vec3, h2: Vec3, gap: float = 0.0) -> bool:
    return (abs(c1.x - c2.x) < h1.x + h2.x + gap) and (abs(c1.z - c2.z) < h1.z + h2.z + gap)


def generate_base_room(template: RoomTemplate, rng: np.random.Generator) -> Scene:
    """Floor rectangle plus furniture boxes placed by rejection sampling."""
    w, d = template.size
    bounds = Bounds(0.0, 0.0, w, d)
    statics: list[StaticBox] = []
    for k, spec in enumerate(template.furniture):
        hx, hy, hz = spec.half_extents
        if rng.random() < 0.5:
            hx, hz = hz, hx
        half = Vec3(hx, hy, hz)
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            if w <= 2 * hx or d <= 2 * hz:
                break
            c = Vec3(float(rng.uniform(hx, w - hx)), hy, float(rng.uniform(hz, d - hz)))
            if all(not _overlap_xz(c, half, s.center, s.half_extents, FURNITURE_GAP) for s in statics):
                statics.append(StaticBox(f"{spec.name}_{k}", c, half))
                break
        else:
            raise GenerationError(f"could not place furniture item {spec.name!r} in {template.name!r}")
        if len(statics) != k + 1:
            raise GenerationError(f"could not place furniture item {spec.name!r} in {template.name!r}")
    return Scene(task="fire", seed=0, bounds=bounds, statics=statics)


def _surfaces(statics: list[StaticBox]) -> list[StaticBox]:
    return [s for s in statics if s.top <= MAX_SURFACE_TOP
            and min(s.half_extents.x, s.half_extents.z) <= MAX_SURFACE_HALF_DEPTH]


class _Placer:
    def __init__(self, scene: Scene, rng: np.random.Generator):
        self.scene = scene
        self.rng = rng
        self.surfaces = _surfaces(scene.statics)
        self.placed: list[tuple[Vec3, Vec3]] = []

    def _free_on_floor(self, c: Vec3, half: Vec3, clearance: float = 0.05) -> bool:
        for s in self.scene.statics:
            if _overlap_xz(c, half, s.center, s.half_extents, clearance):
                return False
        return all(not _overlap_xz(c, half, pc, ph, 0.05) for pc, ph in self.placed)

    def floor(self, half: Vec3, what: str, margin: float = 0.1) -> Vec3:
        b = self.scene.bounds
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            x = float(self.rng.uniform(b.xmin + half.x + margin, b.xmax - half.x - margin))
            z = float(self.rng.uniform(b.zmin + half.z + margin, b.zmax - half.z - margin))
            c = Vec3(x, half.y, z)
            if self._free_on_floor(c, half):
                self.placed.append((c, half))
                return c
        raise GenerationError(f"could not place {what}")

    def surface(self, half: Vec3, what: str) -> Optional[Vec3]:
        if not self.surfaces:
            return None
        s = self.surfaces[int(self.rng.integers(len(self.surfaces)))]
        sx, sz = s.half_extents.x - half.x, s.half_extents.z - half.z
        if sx <= 0 or sz <= 0:
            return None
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            c = Vec3(float(self.rng.uniform(s.center.x - sx, s.center.x + sx)), s.top + half.y,
                     float(self.rng.uniform(s.center.z - sz, s.center.z + sz)))
            if all(not _overlap_xz(c, half, pc, ph, 0.02) for pc, ph in self.placed):
                self.placed.append((c, half))
                return c
        raise GenerationError(f"could not place {what} on {s.name}")

    def spawn_point(self) -> Vec3:
        b = self.scene.bounds
        m = SPAWN_CLEARANCE
        half = Vec3(0.01, 0.0, 0.01)
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            c = Vec3(float(self.rng.uniform(b.xmin + m, b.xmax - m)), 0.0,
                     float(self.rng.uniform(b.zmin + m, b.zmax - m)))
            if all(not _overlap_xz(c, half, s.center, s.half_extents, m) for s in self.scene.statics) \
                    and all(not _overlap_xz(c, half, pc, ph, m) for pc, ph in self.placed):
                return c
        raise GenerationError("could not place agent spawn")


def populate_scene(skeleton: Scene, config: GenConfig, rng: np.random.Generator, seed: int = 0) -> Scene:
    """Targets, distractors, agent spawn and hazard sources on a base room."""
    scene = Scene(task=config.task, seed=seed, bounds=skeleton.bounds, statics=list(skeleton.statics),
                  hazard=HazardSpec(config.task))
    placer = _Placer(scene, rng)
    pool = list(config.pool)
    if config.target_category_count > len(pool):
        raise GenerationError("more target categories requested than the pool holds")
    picks = sorted(int(i) for i in rng.choice(len(pool), config.target_category_count, replace=False))
    target_cats = [pool[i] for i in picks]
    others = [c for i, c in enumerate(pool) if i not in picks]
    next_id = 1

    def place(cat: ObjectCategory, is_target: bool, is_container: bool = False) -> None:
        nonlocal next_id
        half = Vec3(*cat.size)
        pos = None
        if not is_container and rng.random() < config.surface_probability:
            pos = placer.surface(half, cat.name)
        if pos is None:
            pos = placer.floor(half, cat.name)
        scene.objects.append(ObjectInstance(next_id, cat, pos, half, 0.0, is_target, is_container))
        next_id += 1

    for cat in target_cats:
        for _ in range(_rand_range(rng, config.instances_per_category)):
            place(cat, True)
    for _ in range(_rand_range(rng, config.distractor_count)):
        if not others:
            break
        place(others[int(rng.integers(len(others)))], False)
    if config.task == "wind":
        cart = builtin_pool("containers")[0]
        for _ in range(_rand_range(rng, config.container_count)):
            place(cart, False, True)

    spawn = placer.spawn_point()
    scene.agent_spawn = (spawn, float(rng.uniform(0.0, 360.0)))

    if config.task == "fire":
        sources = []
        n = _rand_range(rng, config.fire_source_count)
        b = scene.bounds
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            if len(sources) == n:
                break
            x = float(rng.uniform(b.xmin + 0.2, b.xmax - 0.2))
            z = float(rng.uniform(b.zmin + 0.2, b.zmax - 0.2))
            if math.hypot(x - spawn.x, z - spawn.z) < config.fire_source_min_spawn_distance:
                continue
            if any(s.footprint_contains(x, z) for s in scene.statics):
                continue
            sources.append((round(x, 6), round(z, 6)))
        if len(sources) < n:
            raise GenerationError("could not place fire sources")
        scene.hazard = HazardSpec("fire", fire_sources=tuple(sources))
    elif config.task == "flood":
        edge = ("xmin", "xmax", "zmin", "zmax")[int(rng.integers(4))]
        scene.hazard = HazardSpec("flood", flood_edge=edge)
    else:
        ang = float(rng.uniform(0.0, 2.0 * math.pi))
        scene.hazard = HazardSpec("wind", wind_direction=Vec3(round(math.cos(ang), 9), 0.0,
                                                              round(math.sin(ang), 9)))
    validate_scene(scene)
    return scene


def reachable_targets(scene: Scene, approach_radius: float = APPROACH_RADIUS) -> list[int]:
    """Targets an A* walk from the spawn can get within ``approach_radius`` of."""
    grid = rasterize_grid(scene)
    blocked = rasterize_grid(scene, include_objects=False).height_of > AGENT_BLOCK_HEIGHT
    spawn = scene.agent_spawn[0]
    out = []
    for t in scene.targets:
        if plan_path(grid, spawn, t.position, goal_radius=approach_radius, blocked=blocked) is not None:
            out.append(t.id)
    return out


def generate_scene(config: GenConfig, template: RoomTemplate, seed: int) -> Scene:
    """Pure function of (config, template, seed); regenerates until every target is reachable."""
    rng = rngmod.stream(seed, "procgen", config.task, template.name)
    last: Optional[Exception] = None
    for _ in range(MAX_SCENE_ATTEMPTS):
        try:
            skeleton = generate_base_room(template, rng)
            scene = populate_scene(skeleton, config, rng, seed)
        except GenerationError as exc:
            last = exc
            continue
        if len(reachable_targets(scene)) == len(scene.targets):
            return scene
    raise GenerationError(f"no valid scene for {template.name!r} seed {seed}: {last or 'unreachable targets'}")


def ignition_micro_scene(seed: int = 0) -> Scene:
    """Two equal-value targets in a 10 x 5 m fire room.

    The near one sits off to the side; the far one is ringed by three fire
    sources and ignites at about frame 140-180, so only a far-first plan
    rescues both undamaged.
    """
    cat = {c.name: c for c in builtin_pool("fire_flood")}["teddy_bear"]
    half = Vec3(*cat.size)
    near = ObjectInstance(1, cat, Vec3(3.5, half.y, 4.0), half, is_target=True)
    far = ObjectInstance(2, cat, Vec3(8.0, half.y, 1.0), half, is_target=True)
    spawn = Vec3(2.0, 0.0, 2.5)
    # face between the two targets so both start in view
    heading = (heading_to(spawn, near.position) + heading_to(spawn, far.position)) / 2.0
    sources = ((8.5, 1.0), (7.5, 1.0), (8.0, 1.5))
    return Scene("fire", seed, Bounds(0.0, 0.0, 10.0, 5.0), [], [near, far], (spawn, heading),
                 HazardSpec("fire", sources))


def scene_seed(master_seed: int, task: str, room: str, index: int) -> int:
    return rngmod.derive_seed(master_seed, task, room, index)


def generate_dataset(config: GenConfig, master_seed: int, out_dir: str | os.PathLike) -> dict[str, Any]:
    """Write ``scenes_per_room`` scenes per template plus ``manifest.json``; returns the manifest."""
    out = Path(out_dir)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    n_rooms = len(config.room_templates)
    test_room = config.test_room % n_rooms
    entries = []
    for r, template in enumerate(config.room_templates):
        for idx in range(config.scenes_per_room):
            seed = scene_seed(master_seed, config.task, template.name, idx)
            scene = generate_scene(config, template, seed)
            rel = f"scenes/{config.task}_{template.name}_{idx:02d}.json"
            (out / rel).write_text(dumps_scene(scene))
            entries.append({"scene_path": rel, "room": template.name, "seed": seed,
                            "split": "test" if r == test_room else "train"})
    manifest = {"task": config.task, "master_seed": master_seed, "entries": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest


def load_manifest(path: str | os.PathLike) -> dict[str, Any]:
    with open(path) as f:
        m = json.load(f)
    for key in ("task", "master_seed", "entries"):
        if key not in m:
            raise GenerationError(f"manifest {path}: missing {key!r}")
    return m
