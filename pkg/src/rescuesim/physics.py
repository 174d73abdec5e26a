"""Frame loop: force accumulation, semi-implicit integration, contacts, hazard dispatch."""

from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import rng as rngmod
from .fire import FireParams, FireSystem
from .flood import FloodParams, FloodState, apply_flood_damage, flood_forces, submerged_volume, water_height_at, fluid_velocity
from .vec import ZERO, Vec3
from .wind import WindParams, mark_out_of_reach, wind_load
from .world import GridMap, ObjectInstance, Scene, rasterize_grid

# objects may step onto supports at most this much higher than their bottom
STEP_TOLERANCE = 0.05
CONTACT_EPS = 1e-6


class PhysicsError(RuntimeError):
    pass


@dataclass(frozen=True)
class PhysicsParams:
    gravity: float = 9.81
    frame_dt: float = 1.0 / 30.0
    ground_restitution: float = 0.0
    friction_decay: float = 0.1
    angular_damping: float = 0.1
    agent_effects_enabled: bool = False
    # agent hazard effects (only when enabled)
    headwind_coefficient: float = 0.5
    agent_heat_limit: float = 120.0

    def validate(self) -> None:
        if not self.frame_dt > 0:
            raise ValueError("frame_dt must be > 0")


@dataclass(frozen=True)
class HazardConfig:
    fire: FireParams = FireParams()
    flood: FloodParams = FloodParams()
    wind: WindParams = WindParams()

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "HazardConfig":
        return cls(
            fire=FireParams(**d.get("fire", {})),
            flood=FloodParams(**d.get("flood", {})),
            wind=WindParams(**d.get("wind", {})),
        )

    def to_dict(self) -> dict[str, Any]:
        return {"fire": dataclasses.asdict(self.fire), "flood": dataclasses.asdict(self.flood),
                "wind": dataclasses.asdict(self.wind)}


@dataclass
class FrameEvents:
    frame: int
    ignitions: list[int] = field(default_factory=list)
    burnouts: list[int] = field(default_factory=list)
    damages: list[int] = field(default_factory=list)
    blown_out: list[int] = field(default_factory=list)
    # objects that came to rest on a support this frame: (id, support height)
    contacts: list[tuple[int, float]] = field(default_factory=list)
    fire_cells: int = 0

    def is_empty(self) -> bool:
        return not (self.ignitions or self.burnouts or self.damages or self.blown_out)

    def to_record(self) -> dict[str, Any]:
        return {
            "frame": self.frame,
            "ignitions": self.ignitions,
            "burnouts": self.burnouts,
            "damages": self.damages,
            "blown_out": self.blown_out,
            "contacts": [[i, h] for i, h in self.contacts],
            "fire_cells": self.fire_cells,
        }


class World:
    """Single-owner simulation state for one episode."""

    def __init__(self, scene: Scene, hazards: HazardConfig = HazardConfig(),
                 params: PhysicsParams = PhysicsParams(), seed: Optional[int] = None):
        params.validate()
        self.scene = scene.copy()
        self.task = scene.task
        self.params = params
        self.hazards = hazards
        self.seed = scene.seed if seed is None else seed
        self.frame = 0
        self.static_grid = rasterize_grid(self.scene, include_objects=False)
        self.spread_rng = rngmod.stream(self.seed, "spread")
        self.wind_rngs: dict[int, np.random.Generator] = {}
        self.fire: Optional[FireSystem] = None
        self.flood_params: Optional[FloodParams] = None
        self.flood: Optional[FloodState] = None
        self.wind_velocity = ZERO
        self._in_contact: set[int] = set()
        if self.task == "fire":
            self.fire = FireSystem(self.scene, hazards.fire)
        elif self.task == "flood":
            self.flood_params = dataclasses.replace(hazards.flood, origin_edge=self.scene.hazard.flood_edge)
            self.flood_params.validate()
            self.flood = FloodState()
        else:
            hazards.wind.validate()
            self.wind_velocity = hazards.wind.velocity(self.scene.hazard.wind_direction)
            # one stream per object keeps every body's turbulence independent of the others
            for o in self.scene.objects:
                self.wind_rngs[o.id] = rngmod.stream(self.seed, "wind", o.id)
        self._by_id = {o.id: o for o in self.scene.objects}

    def copy(self) -> "World":
        return copy.deepcopy(self)

    def obj(self, oid: int) -> ObjectInstance:
        return self._by_id[oid]

    @property
    def objects(self) -> list[ObjectInstance]:
        return self.scene.objects

    def water_height(self, point: Vec3) -> float:
        if self.flood is None:
            return 0.0
        return water_height_at(self.flood, self.flood_params, point, self.scene.bounds)

    def temperature_at(self, point: Vec3) -> float:
        if self.fire is None:
            return self.hazards.fire.room_temperature
        return self.fire.temperature_at(point, self.scene.objects, self.frame)

    def flow_at(self, point: Vec3) -> Vec3:
        """Velocity (m/s) of the moving medium at a floor point, for agent effects."""
        if self.flood is not None and self.water_height(point) > 0.0:
            return fluid_velocity(self.flood_params, self.params.frame_dt)
        if self.task == "wind":
            return self.wind_velocity
        return ZERO

    def nav_grid(self, cell_size: float = 0.25) -> GridMap:
        return rasterize_grid(self.scene, cell_size)

    def support_height(self, obj: ObjectInstance, position: Optional[Vec3] = None) -> float:
        p = obj.position if position is None else position
        g = self.static_grid
        if not (g.origin.x <= p.x < g.origin.x + g.width * g.cell_size
                and g.origin.z <= p.z < g.origin.z + g.height * g.cell_size):
            return 0.0
        h = float(g.height_of[g.cell_of(p.x, p.z)])
        bottom = p.y - obj.half_extents.y
        return h if h <= bottom + STEP_TOLERANCE else 0.0

    def blocked_at(self, obj: ObjectInstance, position: Vec3) -> bool:
        g = self.static_grid
        if not (g.origin.x <= position.x < g.origin.x + g.width * g.cell_size
                and g.origin.z <= position.z < g.origin.z + g.height * g.cell_size):
            return False
        h = float(g.height_of[g.cell_of(position.x, position.z)])
        return h > obj.bottom + STEP_TOLERANCE

    def snapshot(self) -> dict[str, Any]:
        objs = []
        for o in self.scene.objects:
            objs.append([o.id, list(o.position), o.heading, o.status.value,
                         o.temperature, o.damaged, o.lost, o.rescued])
        out: dict[str, Any] = {"frame": self.frame, "objects": objs}
        if self.flood is not None:
            out["flood"] = [self.flood.front_position, self.flood.base_height]
        if self.fire is not None:
            out["fire_cells"] = int(self.fire.field.burning_mask.sum())
        return out


def accumulate_forces(world: World) -> dict[int, tuple[Vec3, Vec3]]:
    """Per-object (force, torque) for every free object; custody and lost objects get none."""
    g = world.params.gravity
    out: dict[int, tuple[Vec3, Vec3]] = {}
    for o in world.scene.objects:
        if not o.active:
            continue
        force = Vec3(0.0, -o.mass * g, 0.0)
        torque = ZERO
        if world.task == "flood":
            buoy, drag = flood_forces(o, world.flood, world.flood_params, world.scene.bounds,
                                      world.params.frame_dt, g)
            force = force + buoy + drag
        elif world.task == "wind" and o.category.wind_susceptible:
            f, t = wind_load(o, world.hazards.wind, world.wind_velocity, world.wind_rngs[o.id])
            force = force + f
            torque = t
        out[o.id] = (force, torque)
    return out


def integrate_step(world: World, forces: dict[int, tuple[Vec3, Vec3]]) -> None:
    """Semi-implicit Euler on velocity then position; yaw-only rotation."""
    dt = world.params.frame_dt
    bounds = world.scene.bounds
    indoor = world.task != "wind"
    for oid, (force, torque) in forces.items():
        if not (force.is_finite() and torque.is_finite()):
            raise PhysicsError(f"frame {world.frame}: non-finite force on object {oid}")
        o = world.obj(oid)
        m = o.mass
        v = o.velocity + force.scale(dt / m)
        if world.flood is not None:
            _, frac = submerged_volume(o, world.water_height(o.position))
            if frac > 0.0:
                v = v.scale(1.0 - world.flood_params.submerged_damping)
        new = o.position + v.scale(dt)
        if (new.x != o.position.x or new.z != o.position.z) and world.blocked_at(o, new):
            new = Vec3(o.position.x, new.y, o.position.z)
            v = Vec3(0.0, v.y, 0.0)
        if indoor:
            hx, hz = o.half_extents.x, o.half_extents.z
            x = min(max(new.x, bounds.xmin + hx), bounds.xmax - hx) if bounds.width > 2 * hx else new.x
            z = min(max(new.z, bounds.zmin + hz), bounds.zmax - hz) if bounds.depth > 2 * hz else new.z
            if x != new.x:
                v = Vec3(0.0, v.y, v.z)
            if z != new.z:
                v = Vec3(v.x, v.y, 0.0)
            new = Vec3(x, new.y, z)
        o.velocity = v
        o.position = new
        if torque.y != 0.0:
            h = o.half_extents
            inertia = m * (h.x * h.x + h.z * h.z) / 3.0
            o.yaw_rate += math.degrees(torque.y / inertia) * dt
        if o.yaw_rate != 0.0:
            o.heading = (o.heading + o.yaw_rate * dt) % 360.0


def resolve_contacts(world: World) -> list[tuple[int, float]]:
    """Clamp free objects onto floor or support tops; returns new contacts."""
    landed = []
    decay = world.params.friction_decay
    now_in_contact = set()
    for o in world.scene.objects:
        if not o.active:
            continue
        support = world.support_height(o)
        if o.bottom <= support + CONTACT_EPS:
            o.position = Vec3(o.position.x, support + o.half_extents.y, o.position.z)
            vy = max(o.velocity.y, 0.0)
            o.velocity = Vec3(o.velocity.x * (1.0 - decay), vy, o.velocity.z * (1.0 - decay))
            o.yaw_rate *= 1.0 - world.params.angular_damping
            now_in_contact.add(o.id)
            if o.id not in world._in_contact:
                landed.append((o.id, support))
    world._in_contact = now_in_contact
    return landed


def step_frame(world: World) -> FrameEvents:
    """Advance one frame in the fixed order and return what happened."""
    frame = world.frame
    ev = FrameEvents(frame=frame)
    objects = world.scene.objects
    # hazard field update
    if world.fire is not None:
        world.fire.update_temperatures(objects, frame)
    elif world.flood is not None:
        world.flood.advance(world.flood_params)
    forces = accumulate_forces(world)
    integrate_step(world, forces)
    ev.contacts = resolve_contacts(world)
    # status and damage
    if world.fire is not None:
        ev.ignitions, ev.burnouts, ev.damages = world.fire.update_statuses(objects, frame)
        world.fire.spread(objects, frame, world.spread_rng)
        ev.fire_cells = int(world.fire.field.burning_mask.sum())
    elif world.flood is not None:
        for o in objects:
            if not o.active:
                continue
            _, frac = submerged_volume(o, world.water_height(o.position))
            if apply_flood_damage(o, frac, world.flood_params):
                ev.damages.append(o.id)
    if world.task == "wind":
        ev.blown_out = mark_out_of_reach(world.scene, world.hazards.wind)
    world.frame += 1
    return ev
