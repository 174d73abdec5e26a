"""Scene builders and shared state for the test suite."""

from __future__ import annotations

from typing import Optional

from rescuesim.vec import Vec3
from rescuesim.world import Bounds, HazardSpec, ObjectCategory, ObjectInstance, Scene, StaticBox

# criterion number -> printed PASS/FAIL line
ACCEPTANCE: dict[int, str] = {}


def report(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n:2d} {title}: {detail}"
    ACCEPTANCE[n] = line
    print(line)


def category(name: str = "box", value: float = 10.0, *, waterproof: bool = False, ignition: float = 200.0,
             burn: int = 300, density: float = 500.0, drag: float = 1.0, wind: bool = False,
             size=(0.1, 0.1, 0.1)) -> ObjectCategory:
    return ObjectCategory(name, value, waterproof, ignition, burn, density, drag, wind, tuple(size))


def obj(oid: int, cat: ObjectCategory, x: float, z: float, *, y: Optional[float] = None, target: bool = False,
        container: bool = False, half=None) -> ObjectInstance:
    h = Vec3(*(half or cat.size))
    return ObjectInstance(oid, cat, Vec3(x, h.y if y is None else y, z), h, is_target=target,
                          is_container=container)


def scene(task: str = "fire", objects=(), *, size=(10.0, 10.0), statics=(), spawn=(1.0, 1.0), heading=0.0,
          seed: int = 1, sources=(), edge: str = "xmin", wind=Vec3(1.0, 0.0, 0.0)) -> Scene:
    if task == "fire":
        hz = HazardSpec("fire", tuple(sources))
    elif task == "flood":
        hz = HazardSpec("flood", flood_edge=edge)
    else:
        hz = HazardSpec("wind", wind_direction=wind)
    return Scene(task, seed, Bounds(0.0, 0.0, *size), list(statics), list(objects),
                 (Vec3(spawn[0], 0.0, spawn[1]), heading), hz)


def box(name: str, x: float, z: float, hx: float, hz: float, height: float) -> StaticBox:
    return StaticBox(name, Vec3(x, height / 2.0, z), Vec3(hx, height / 2.0, hz))
