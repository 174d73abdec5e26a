"""Temperature system, burn status machine, and probabilistic floor-fire spread."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .vec import Vec3
from .world import Bounds, ObjectInstance, Scene, Status


@dataclass(frozen=True)
class FireParams:
    room_temperature: float = 20.0
    decay_rate: float = 0.1
    room_weight: float = 200.0
    distance_threshold: float = 1.0
    flame_temperature: float = 500.0
    floor_cell_size: float = 0.25
    spread_slope: float = 1.0 / 600.0
    spread_cap_frames: int = 600
    # how long a floor cell burns before it is spent
    cell_burn_duration: int = 900
    # frames a burnt object keeps radiating at flame temperature
    burnt_cooldown_frames: int = 0

    def validate(self, max_ignition_point: Optional[float] = None) -> None:
        if not 0.0 < self.decay_rate < 1.0:
            raise ValueError("decay_rate must lie in (0, 1)")
        if not (self.room_weight > 0 and self.distance_threshold > 0 and self.floor_cell_size > 0):
            raise ValueError("room_weight, distance_threshold and floor_cell_size must be > 0")
        if not self.spread_slope > 0:
            raise ValueError("spread_slope must be > 0")
        if self.spread_slope * self.spread_cap_frames < 1.0 - 1e-12:
            raise ValueError("spread_slope * spread_cap_frames must be >= 1")
        if max_ignition_point is not None and not self.flame_temperature > max_ignition_point:
            raise ValueError("flame_temperature must exceed every ignition point")


class FireField:
    """Burning state of the floor raster.

    ``ignition_frame[i, j]`` is -1 for cells that never caught fire; ``burnt``
    marks cells whose fire is spent. A cell is burning when it has an ignition
    frame and is not burnt.
    """

    def __init__(self, bounds: Bounds, cell_size: float):
        self.cell_size = cell_size
        self.origin = (bounds.xmin, bounds.zmin)
        self.width = max(1, int(math.ceil(bounds.width / cell_size - 1e-9)))
        self.height = max(1, int(math.ceil(bounds.depth / cell_size - 1e-9)))
        self.ignition_frame = np.full((self.width, self.height), -1, dtype=np.int64)
        self.burnt = np.zeros((self.width, self.height), dtype=bool)

    @classmethod
    def for_shape(cls, width: int, height: int, cell_size: float = 1.0) -> "FireField":
        return cls(Bounds(0.0, 0.0, width * cell_size, height * cell_size), cell_size)

    def copy(self) -> "FireField":
        out = object.__new__(FireField)
        out.cell_size = self.cell_size
        out.origin = self.origin
        out.width, out.height = self.width, self.height
        out.ignition_frame = self.ignition_frame.copy()
        out.burnt = self.burnt.copy()
        return out

    @property
    def burning_mask(self) -> np.ndarray:
        return (self.ignition_frame >= 0) & ~self.burnt

    @property
    def burning_cells(self) -> dict[tuple[int, int], int]:
        ii, jj = np.nonzero(self.burning_mask)
        return {(int(i), int(j)): int(self.ignition_frame[i, j]) for i, j in zip(ii, jj)}

    @property
    def burnt_cells(self) -> set[tuple[int, int]]:
        ii, jj = np.nonzero(self.burnt)
        return {(int(i), int(j)) for i, j in zip(ii, jj)}

    def cell_of(self, x: float, z: float) -> Optional[tuple[int, int]]:
        i = int(math.floor((x - self.origin[0]) / self.cell_size))
        j = int(math.floor((z - self.origin[1]) / self.cell_size))
        if 0 <= i < self.width and 0 <= j < self.height:
            return i, j
        return None

    def cell_center(self, i: int, j: int) -> Vec3:
        return Vec3(self.origin[0] + (i + 0.5) * self.cell_size, 0.0,
                    self.origin[1] + (j + 0.5) * self.cell_size)

    def ignite(self, i: int, j: int, frame: int) -> bool:
        if self.ignition_frame[i, j] >= 0 or self.burnt[i, j]:
            return False
        self.ignition_frame[i, j] = frame
        return True

    def burning_centers(self) -> np.ndarray:
        ii, jj = np.nonzero(self.burning_mask)
        out = np.zeros((len(ii), 3))
        out[:, 0] = self.origin[0] + (ii + 0.5) * self.cell_size
        out[:, 2] = self.origin[1] + (jj + 0.5) * self.cell_size
        return out


def heat_weight(distance: float, threshold: float) -> float:
    """min(D^-2, dist^-2); coincident sources get the capped weight."""
    if distance <= threshold:
        return threshold ** -2
    return distance ** -2


def is_heat_source(obj: ObjectInstance, frame: int, params: FireParams) -> bool:
    if obj.status is Status.BURNING:
        return True
    if obj.status is Status.BURNT and obj.burnt_frame is not None:
        return frame - obj.burnt_frame < params.burnt_cooldown_frames
    return False


def source_temperature(obj: ObjectInstance, frame: int, params: FireParams) -> float:
    if is_heat_source(obj, frame, params):
        return params.flame_temperature
    return obj.temperature if obj.temperature is not None else params.room_temperature


def env_temperature(obj: ObjectInstance, scene: Scene, field: Optional[FireField],
                    params: FireParams, frame: int = 0) -> float:
    """Weighted average of room temperature, other objects and burning floor cells.

    Scalar reference implementation; the frame loop uses ``env_temperatures``.
    """
    here = obj.hazard_position
    num = params.room_weight * params.room_temperature
    den = params.room_weight
    for other in scene.objects:
        if other is obj or other.lost:
            continue
        w = heat_weight((other.hazard_position - here).norm(), params.distance_threshold)
        num += w * source_temperature(other, frame, params)
        den += w
    if field is not None:
        for (i, j) in field.burning_cells:
            w = heat_weight((field.cell_center(i, j) - here).norm(), params.distance_threshold)
            num += w * params.flame_temperature
            den += w
    return num / den


def env_temperatures(positions: np.ndarray, source_temps: np.ndarray, cell_centers: np.ndarray,
                     params: FireParams) -> np.ndarray:
    """Vectorized env temperature for n objects at ``positions`` (n, 3).

    ``source_temps`` is what each object radiates to its neighbours;
    ``cell_centers`` (m, 3) are burning floor cells radiating flame temperature.
    """
    d2_floor = params.distance_threshold ** 2
    n = len(positions)
    num = np.full(n, params.room_weight * params.room_temperature, dtype=float)
    den = np.full(n, params.room_weight, dtype=float)
    if n > 1:
        diff = positions[:, None, :] - positions[None, :, :]
        w = 1.0 / np.maximum(np.einsum("ijk,ijk->ij", diff, diff), d2_floor)
        np.fill_diagonal(w, 0.0)
        num += w @ source_temps
        den += w.sum(axis=1)
    if len(cell_centers):
        diff = positions[:, None, :] - cell_centers[None, :, :]
        w = 1.0 / np.maximum(np.einsum("ijk,ijk->ij", diff, diff), d2_floor)
        ws = w.sum(axis=1)
        num += ws * params.flame_temperature
        den += ws
    return num / den


def step_temperature(temperature, env, decay_rate: float):
    """T' = T(1 - d) + d T_env; works on floats and arrays alike."""
    return temperature * (1.0 - decay_rate) + decay_rate * env


def update_burn_status(obj: ObjectInstance, frame: int, params: FireParams) -> Optional[str]:
    """Advance the normal -> burning -> burnt machine; returns 'ignite', 'burnout' or None.

    Objects in the agent's custody keep their thermal state but no longer
    latch damage.
    """
    temp = obj.temperature if obj.temperature is not None else params.room_temperature
    if obj.status is Status.NORMAL:
        if temp >= obj.category.ignition_point:
            obj.set_status(Status.BURNING)
            obj.ignition_frame = frame
            if not obj.in_custody:
                obj.damaged = True
            return "ignite"
        return None
    if obj.status is Status.BURNING:
        assert obj.ignition_frame is not None
        if frame - obj.ignition_frame >= obj.category.burn_duration:
            obj.set_status(Status.BURNT)
            obj.burnt_frame = frame
            return "burnout"
    return None


def spread_probability(age, params: FireParams):
    """Linear spread chance p(t) = slope * t clamped to [0, 1]; certain from the cap on."""
    age = np.asarray(age, dtype=float)
    p = np.clip(params.spread_slope * age, 0.0, 1.0)
    p = np.where(age >= params.spread_cap_frames, 1.0, p)
    return p if p.ndim else float(p)


_NEIGHBOURS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def spread_floor_fire(field: FireField, frame: int, rng: np.random.Generator,
                      params: FireParams) -> list[tuple[int, int]]:
    """One frame of floor spread; returns the newly ignited cells in row-major order.

    Every burning cell tries each 4-neighbour independently with probability
    p(age). Four uniform fields are drawn per call whatever the state, so the
    stream position depends only on the frame count.
    """
    burning = field.burning_mask
    age = np.where(burning, frame - field.ignition_frame, 0)
    p = np.where(burning, spread_probability(age, params), 0.0)
    u = rng.random((4, field.width, field.height))
    reached = np.zeros_like(burning)
    for k, (di, dj) in enumerate(_NEIGHBOURS):
        hit = u[k] < p
        # shift successes from source cells onto their (di, dj) neighbour
        src_i = slice(max(0, -di), field.width - max(0, di))
        dst_i = slice(max(0, di), field.width - max(0, -di))
        src_j = slice(max(0, -dj), field.height - max(0, dj))
        dst_j = slice(max(0, dj), field.height - max(0, -dj))
        reached[dst_i, dst_j] |= hit[src_i, src_j]
    new = reached & (field.ignition_frame < 0) & ~field.burnt
    field.ignition_frame[new] = frame
    ii, jj = np.nonzero(new)
    return [(int(i), int(j)) for i, j in zip(ii, jj)]


def burn_out_cells(field: FireField, frame: int, params: FireParams) -> None:
    spent = field.burning_mask & (frame - field.ignition_frame >= params.cell_burn_duration)
    field.burnt |= spent


class FireSystem:
    """Per-episode fire state: floor field plus the synchronous temperature update."""

    def __init__(self, scene: Scene, params: FireParams):
        params.validate(max((o.category.ignition_point for o in scene.objects), default=None))
        self.params = params
        self.field = FireField(scene.bounds, params.floor_cell_size)
        for (x, z) in scene.hazard.fire_sources:
            cell = self.field.cell_of(x, z)
            if cell is not None:
                self.field.ignite(*cell, 0)
        for o in scene.objects:
            if o.temperature is None:
                o.temperature = params.room_temperature

    def copy(self) -> "FireSystem":
        out = object.__new__(FireSystem)
        out.params = self.params
        out.field = self.field.copy()
        return out

    def update_temperatures(self, objects: Sequence[ObjectInstance], frame: int) -> None:
        live = [o for o in objects if not o.lost]
        if not live:
            return
        pos = np.array([o.hazard_position for o in live], dtype=float)
        src = np.array([source_temperature(o, frame, self.params) for o in live])
        temps = np.array([o.temperature for o in live], dtype=float)
        env = env_temperatures(pos, src, self.field.burning_centers(), self.params)
        new = step_temperature(temps, env, self.params.decay_rate)
        for o, t in zip(live, new):
            o.temperature = float(t)

    def update_statuses(self, objects: Iterable[ObjectInstance], frame: int) -> tuple[list[int], list[int], list[int]]:
        ignitions, burnouts, damages = [], [], []
        for o in objects:
            if o.lost:
                continue
            was_damaged = o.damaged
            event = update_burn_status(o, frame, self.params)
            if event == "ignite":
                ignitions.append(o.id)
            elif event == "burnout":
                burnouts.append(o.id)
            if o.damaged and not was_damaged:
                damages.append(o.id)
        return ignitions, burnouts, damages

    def spread(self, objects: Iterable[ObjectInstance], frame: int, rng: np.random.Generator) -> list[tuple[int, int]]:
        burn_out_cells(self.field, frame, self.params)
        new = spread_floor_fire(self.field, frame, rng, self.params)
        for o in objects:
            if o.status is Status.BURNING and not o.lost:
                pos = o.hazard_position
                cell = self.field.cell_of(pos.x, pos.z)
                if cell is not None and self.field.ignite(*cell, frame):
                    new.append(cell)
        return new

    def temperature_at(self, point: Vec3, objects: Sequence[ObjectInstance], frame: int) -> float:
        """Env temperature felt at an arbitrary point (used for agent heat limits)."""
        pos = np.array([point] + [o.hazard_position for o in objects if not o.lost], dtype=float)
        src = np.array([0.0] + [source_temperature(o, frame, self.params) for o in objects if not o.lost])
        # row 0 excludes its own (dummy) source term via the zeroed diagonal
        env = env_temperatures(pos, src, self.field.burning_centers(), self.params)
        return float(env[0])
