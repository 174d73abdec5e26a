"""Wind load: main pressure force, orthogonal turbulence, and random torque."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flood import projected_area
from .vec import ZERO, Vec3
from .world import ObjectInstance, Scene


@dataclass(frozen=True)
class WindParams:
    air_density: float = 1.2
    wind_speed: float = 4.0  # m/s, along the scene's wind direction
    turbulence_ratio: float = 0.3
    torque_magnitude: float = 0.05  # N*m
    out_of_bounds_margin: float = 1.0

    def validate(self) -> None:
        if not self.air_density > 0:
            raise ValueError("air_density must be > 0")
        if self.turbulence_ratio < 0:
            raise ValueError("turbulence_ratio must be >= 0")

    def velocity(self, direction: Vec3) -> Vec3:
        return direction.unit().scale(self.wind_speed)


def random_unit(rng: np.random.Generator) -> Vec3:
    """Uniform direction on the unit sphere."""
    while True:
        x, y, z = (float(v) for v in rng.standard_normal(3))
        n = (x * x + y * y + z * z) ** 0.5
        if n > 1e-12:
            return Vec3(x / n, y / n, z / n)


def turbulence_vector(rng: np.random.Generator, main: Vec3, length: float) -> Vec3:
    """Random vector of the given length, orthogonal to ``main``.

    A uniform sphere sample projected onto the plane normal to ``main``; the
    projected direction is uniform on that circle.
    """
    axis = main.unit()
    while True:
        u = random_unit(rng)
        perp = u - axis.scale(u.dot(axis))
        n = perp.norm()
        if n > 1e-9:
            return perp.scale(length / n)


def wind_load(obj: ObjectInstance, params: WindParams, wind_velocity: Vec3,
              rng: np.random.Generator) -> tuple[Vec3, Vec3]:
    """(force, torque) on a wind-susceptible object.

    The stream is consumed identically whether or not the relative wind is zero,
    so sample positions stay aligned across frames.
    """
    v_rel = wind_velocity - obj.velocity
    speed = v_rel.norm()
    # draw order is fixed: turbulence direction, then torque direction
    if speed > 0.0:
        direction = v_rel.scale(1.0 / speed)
        area = projected_area(obj.half_extents, 2.0 * obj.half_extents.y, direction)
        f1 = direction.scale(params.air_density * speed * speed * area)
        r = turbulence_vector(rng, f1, params.turbulence_ratio)
        f2 = r.cross(f1)
        force = f1 + f2
    else:
        random_unit(rng)
        force = ZERO
    torque = random_unit(rng).scale(params.torque_magnitude)
    return force, torque


def main_force(obj: ObjectInstance, params: WindParams, wind_velocity: Vec3) -> Vec3:
    v_rel = wind_velocity - obj.velocity
    speed = v_rel.norm()
    if speed == 0.0:
        return ZERO
    direction = v_rel.scale(1.0 / speed)
    area = projected_area(obj.half_extents, 2.0 * obj.half_extents.y, direction)
    return direction.scale(params.air_density * speed * speed * area)


def mark_out_of_reach(scene: Scene, params: WindParams) -> list[int]:
    """Flag active objects blown past bounds + margin; they leave the simulation."""
    flagged = []
    for o in scene.objects:
        if o.active and not scene.bounds.contains(o.position.x, o.position.z, params.out_of_bounds_margin):
            o.lost = True
            o.velocity = ZERO
            flagged.append(o.id)
    return flagged
