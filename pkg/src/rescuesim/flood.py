"""Rising, advancing water surface with buoyancy, drag and submersion damage."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .vec import ZERO, Vec3
from .world import Bounds, ObjectInstance

GRAVITY = 9.81

_EDGE_DIRECTIONS = {
    "xmin": Vec3(1.0, 0.0, 0.0),
    "xmax": Vec3(-1.0, 0.0, 0.0),
    "zmin": Vec3(0.0, 0.0, 1.0),
    "zmax": Vec3(0.0, 0.0, -1.0),
}


@dataclass(frozen=True)
class FloodParams:
    fluid_density: float = 1000.0
    rise_rate: float = 0.001  # m/frame
    advance_rate: float = 0.012  # m/frame
    surface_slope: float = 0.25
    origin_edge: str = "xmin"
    damage_submersion_fraction: float = 1.0
    max_height: float = 1.2
    # extra velocity damping per frame for submerged bodies (numerical, non-physical)
    submerged_damping: float = 0.02

    def validate(self) -> None:
        if not self.fluid_density > 0:
            raise ValueError("fluid_density must be > 0")
        if self.rise_rate < 0 or self.advance_rate < 0:
            raise ValueError("rise_rate and advance_rate must be >= 0")
        if not 0.0 < self.damage_submersion_fraction <= 1.0:
            raise ValueError("damage_submersion_fraction must lie in (0, 1]")
        if self.origin_edge not in _EDGE_DIRECTIONS:
            raise ValueError(f"origin_edge must be one of {sorted(_EDGE_DIRECTIONS)}")

    @property
    def advance_direction(self) -> Vec3:
        return _EDGE_DIRECTIONS[self.origin_edge]


@dataclass
class FloodState:
    front_position: float = 0.0  # meters from the origin edge
    base_height: float = 0.0

    def advance(self, params: FloodParams) -> None:
        self.front_position += params.advance_rate
        self.base_height = min(params.max_height, self.base_height + params.rise_rate)


def distance_from_edge(point: Vec3, bounds: Bounds, edge: str) -> float:
    if edge == "xmin":
        return point.x - bounds.xmin
    if edge == "xmax":
        return bounds.xmax - point.x
    if edge == "zmin":
        return point.z - bounds.zmin
    return bounds.zmax - point.z


def water_height_at(state: FloodState, params: FloodParams, point: Vec3, bounds: Bounds) -> float:
    """Flat at base height behind the front, sloping down to zero ahead of it."""
    past_front = distance_from_edge(point, bounds, params.origin_edge) - state.front_position
    return max(0.0, state.base_height - params.surface_slope * max(0.0, past_front))


def submerged_volume(obj: ObjectInstance, water_height: float) -> tuple[float, float]:
    h = obj.half_extents
    depth = min(max(water_height - obj.bottom, 0.0), 2.0 * h.y)
    footprint = 4.0 * h.x * h.z
    volume = footprint * depth
    return volume, depth / (2.0 * h.y)


def projected_area(half: Vec3, depth: float, direction: Vec3) -> float:
    """Area of a (2hx, depth, 2hz) box silhouette seen along ``direction`` (unit)."""
    return (abs(direction.x) * depth * 2.0 * half.z
            + abs(direction.y) * 4.0 * half.x * half.z
            + abs(direction.z) * depth * 2.0 * half.x)


def buoyancy_force(fluid_density: float, submerged: float, g: float = GRAVITY) -> Vec3:
    return Vec3(0.0, fluid_density * submerged * g, 0.0)


def drag_magnitude(fluid_density: float, speed: float, drag_coefficient: float, area: float) -> float:
    return 0.5 * fluid_density * speed * speed * drag_coefficient * area


def fluid_velocity(params: FloodParams, frame_dt: float) -> Vec3:
    """Uniform current: the front's advance speed, converted to m/s."""
    return params.advance_direction.scale(params.advance_rate / frame_dt)


def flood_forces(obj: ObjectInstance, state: FloodState, params: FloodParams, bounds: Bounds,
                 frame_dt: float = 1.0 / 30.0, g: float = GRAVITY,
                 water_height: Optional[float] = None) -> tuple[Vec3, Vec3]:
    """(buoyancy, drag) in newtons for a free object."""
    if water_height is None:
        water_height = water_height_at(state, params, obj.position, bounds)
    volume, _ = submerged_volume(obj, water_height)
    if volume <= 0.0:
        return ZERO, ZERO
    buoy = buoyancy_force(params.fluid_density, volume, g)
    v_rel = obj.velocity - fluid_velocity(params, frame_dt)
    speed = v_rel.norm()
    if speed == 0.0:
        return buoy, ZERO
    direction = v_rel.scale(1.0 / speed)
    depth = min(max(water_height - obj.bottom, 0.0), 2.0 * obj.half_extents.y)
    area = projected_area(obj.half_extents, depth, direction)
    drag = direction.scale(-drag_magnitude(params.fluid_density, speed, obj.category.drag_coefficient, area))
    return buoy, drag


def apply_flood_damage(obj: ObjectInstance, fraction: float, params: FloodParams) -> Optional[str]:
    """Latch damage on a non-waterproof target once submerged past the threshold."""
    if obj.damaged or obj.category.waterproof or obj.in_custody:
        return None
    if fraction >= params.damage_submersion_fraction:
        obj.damaged = True
        return "damage"
    return None
