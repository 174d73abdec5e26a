"""Agent-side hazard forecasts built only from remembered observations.

Objects are extrapolated linearly from their last two sightings. Fire spread is
determinized: a burning cell reaches a neighbour at the frame where the
cumulative spread probability first crosses one half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fire import FireParams, spread_probability
from .memory import AgentMemory, TaskInfo
from .vec import Vec3
from .world import Status

FORECAST_STEP = 5  # frames between fire forecast samples


@dataclass(frozen=True)
class TargetForecast:
    id: int
    value: float
    # frame from which the object counts as damaged (0 = already), inf = never
    damage_frame: float
    # frame the object is expected to leave reach (wind), inf = never
    lost_frame: float

    def value_if_secured(self, frame: float) -> float:
        """Expected scoring value when custody begins at ``frame``."""
        if frame >= self.lost_frame:
            return 0.0
        if frame >= self.damage_frame:
            return self.value / 2.0
        return self.value


def spread_half_life(params: FireParams) -> int:
    """Frames until a burning cell has spread to a given neighbour with probability >= 0.5."""
    survive = 1.0
    t = 0
    while survive > 0.5:
        t += 1
        survive *= 1.0 - spread_probability(t, params)
    return t


def predicted_cell_ignition(memory: AgentMemory, shape: tuple[int, int], params: FireParams) -> np.ndarray:
    """Expected ignition frame of every floor cell from the known burning cells (inf if none).

    The front advances one hop per spread half-life along the straight-line
    cell distance. Counting Manhattan hops instead would be too slow on
    diagonals, where two burning neighbours race to ignite a cell.
    """
    out = np.full(shape, np.inf)
    if not memory.burning_cells:
        return out
    hop = spread_half_life(params)
    ii, jj = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
    for (i, j), seen in memory.burning_cells.items():
        t = seen + np.hypot(ii - i, jj - j) * hop
        np.minimum(out, t, out=out)
    return out


def fire_field_shape(task: TaskInfo) -> tuple[int, int]:
    cs = task.fire.floor_cell_size
    b = task.bounds
    return (max(1, int(math.ceil(b.width / cs - 1e-9))), max(1, int(math.ceil(b.depth / cs - 1e-9))))


def forecast_ignition(memory: AgentMemory, task: TaskInfo, ids: list[int], now: int,
                      horizon: int) -> dict[int, float]:
    """Predicted ignition frame per object from the determinized fire front.

    Each object's temperature is rolled forward with the env temperature of
    the predicted burning cells; between samples the env is held constant and
    the recurrence is applied in closed form.
    """
    params = task.fire
    out = {oid: math.inf for oid in ids}
    if not ids or not memory.burning_cells:
        return out
    shape = fire_field_shape(task)
    ign = predicted_cell_ignition(memory, shape, params).ravel()
    cs = params.floor_cell_size
    ii, jj = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
    cx = (task.bounds.xmin + (ii.ravel() + 0.5) * cs)
    cz = (task.bounds.zmin + (jj.ravel() + 0.5) * cs)
    pos = np.array([memory.latest(oid).position for oid in ids], dtype=float)
    d2 = (pos[:, 0:1] - cx[None, :]) ** 2 + pos[:, 1:2] ** 2 + (pos[:, 2:3] - cz[None, :]) ** 2
    w = 1.0 / np.maximum(d2, params.distance_threshold ** 2)
    temps = np.array([_current_temperature(memory, oid, now, params) for oid in ids])
    ignition = np.array([task.target_categories[memory.info[oid].category].ignition_point
                         if memory.info[oid].category in task.target_categories else math.inf for oid in ids])
    pending = np.ones(len(ids), dtype=bool)
    keep = (1.0 - params.decay_rate) ** FORECAST_STEP
    for t in range(now, horizon + 1, FORECAST_STEP):
        hot = temps >= ignition
        for k in np.nonzero(hot & pending)[0]:
            out[ids[k]] = float(t)
        pending &= ~hot
        if not pending.any():
            break
        burning = (ign <= t) & (t - ign < params.cell_burn_duration)
        ws = w[:, burning].sum(axis=1)
        env = (params.room_weight * params.room_temperature + ws * params.flame_temperature) / (params.room_weight + ws)
        temps = env + (temps - env) * keep
    return out


def _current_temperature(memory: AgentMemory, oid: int, now: int, params: FireParams) -> float:
    last = memory.latest(oid)
    return last.hazard if last.hazard is not None else params.room_temperature


def _linear_crossing(memory: AgentMemory, oid: int, threshold: float, now: int) -> float:
    """First frame >= now at which the linearly extrapolated hazard reaches ``threshold``."""
    last = memory.latest(oid)
    if last.hazard is None:
        return math.inf
    if last.hazard >= threshold:
        return float(now)
    rate = memory._rate(oid, "hazard")
    if rate is None or rate <= 0:
        return math.inf
    return max(float(now), last.frame + (threshold - last.hazard) / rate)


def _exit_frame(memory: AgentMemory, oid: int, task: TaskInfo, now: int) -> float:
    b = task.bounds
    m = task.out_of_bounds_margin
    last = memory.latest(oid)
    if not b.contains(last.position.x, last.position.z, m):
        return float(now)
    rate = memory._rate(oid, "position")
    if rate is None:
        return math.inf
    best = math.inf
    for p, v, lo, hi in ((last.position.x, rate.x, b.xmin - m, b.xmax + m),
                         (last.position.z, rate.z, b.zmin - m, b.zmax + m)):
        if v > 1e-12:
            best = min(best, (hi - p) / v)
        elif v < -1e-12:
            best = min(best, (lo - p) / v)
    return max(float(now), last.frame + best)


def forecast_targets(memory: AgentMemory, task: TaskInfo, now: int,
                     ids: Optional[list[int]] = None) -> dict[int, TargetForecast]:
    """Damage and loss forecasts for the remembered targets."""
    ids = memory.known_targets() if ids is None else ids
    fire_ign: dict[int, float] = {}
    if task.task == "fire":
        fresh = [oid for oid in ids if memory.latest(oid).status == Status.NORMAL.value]
        fire_ign = forecast_ignition(memory, task, fresh, now, task.frame_limit)
    out = {}
    for oid in ids:
        last = memory.latest(oid)
        cat = task.target_categories.get(memory.info[oid].category)
        damage = math.inf
        lost = math.inf
        if task.task == "fire":
            if last.status != Status.NORMAL.value:
                damage = 0.0
            elif cat is not None:
                damage = min(_linear_crossing(memory, oid, cat.ignition_point, now), fire_ign.get(oid, math.inf))
        elif task.task == "flood":
            if cat is not None and not cat.waterproof:
                # damage once water covers the object's top
                damage = _linear_crossing(memory, oid, last.top, now)
                if last.hazard is not None and last.hazard >= last.top:
                    damage = 0.0
        else:
            lost = _exit_frame(memory, oid, task, now)
        out[oid] = TargetForecast(oid, last.value, damage, lost)
    return out
