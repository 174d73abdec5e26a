"""Tiny 3-vector helpers on plain tuples.

Per-object physics runs on a few dozen bodies per frame, where Python float
math beats numpy's per-call overhead. y is vertical; gravity acts along -y.
"""

from __future__ import annotations

import math
from typing import NamedTuple


class Vec3(NamedTuple):
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __add__(self, other: "Vec3") -> "Vec3":  # type: ignore[override]
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def scale(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def unit(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            return ZERO
        return Vec3(self.x / n, self.y / n, self.z / n)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)

    def horizontal_distance(self, other: "Vec3") -> float:
        return math.hypot(self.x - other.x, self.z - other.z)


ZERO = Vec3(0.0, 0.0, 0.0)


def vec(values) -> Vec3:
    x, y, z = values
    return Vec3(float(x), float(y), float(z))


def heading_vector(heading_deg: float) -> Vec3:
    """Unit forward vector for a yaw heading; 0 degrees faces +z, 90 faces +x."""
    r = math.radians(heading_deg)
    return Vec3(math.sin(r), 0.0, math.cos(r))


def heading_to(src: Vec3, dst: Vec3) -> float:
    """Yaw heading (degrees, [0, 360)) pointing from src to dst in the floor plane."""
    return math.degrees(math.atan2(dst.x - src.x, dst.z - src.z)) % 360.0


def angle_diff(a: float, b: float) -> float:
    """Signed smallest rotation (degrees) taking heading a to heading b."""
    return (b - a + 180.0) % 360.0 - 180.0
