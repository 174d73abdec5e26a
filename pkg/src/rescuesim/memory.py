"""Observation memory shared by the baseline and LLM agents."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .agent import AgentState, Observation, line_of_sight
from .fire import FireParams
from .vec import Vec3
from .world import Bounds, ObjectCategory, Scene

DEFAULT_HISTORY = 5


@dataclass(frozen=True)
class Snapshot:
    frame: int
    position: Vec3
    status: str
    hazard: Optional[float]  # temperature (fire) or water level (flood)
    value: float
    top: float


@dataclass(frozen=True)
class ObjectInfo:
    category: str
    is_target: bool
    is_container: bool


@dataclass
class TaskInfo:
    """What the agent is told up front: the task, target categories, and the arena."""

    task: str
    target_categories: dict[str, ObjectCategory]
    bounds: Bounds
    frame_limit: int
    fire: FireParams = FireParams()
    out_of_bounds_margin: float = 1.0

    @classmethod
    def from_scene(cls, scene: Scene, frame_limit: int, fire: FireParams = FireParams(),
                   out_of_bounds_margin: float = 1.0) -> "TaskInfo":
        cats = {o.category.name: o.category for o in scene.objects if o.is_target}
        return cls(scene.task, dict(sorted(cats.items())), scene.bounds, frame_limit, fire,
                   out_of_bounds_margin)


@dataclass
class AgentMemory:
    max_history: int = DEFAULT_HISTORY
    history: dict[int, list[Snapshot]] = field(default_factory=dict)
    info: dict[int, ObjectInfo] = field(default_factory=dict)
    last_seen: dict[int, int] = field(default_factory=dict)
    # remembered objects that were not where expected when their spot came into view
    missing: set[int] = field(default_factory=set)
    rescued: set[int] = field(default_factory=set)
    failures: dict[int, int] = field(default_factory=dict)
    burning_cells: dict[tuple[int, int], int] = field(default_factory=dict)
    actions: list[str] = field(default_factory=list)

    def latest(self, oid: int) -> Snapshot:
        return self.history[oid][-1]

    def known_targets(self) -> list[int]:
        return sorted(oid for oid, inf in self.info.items()
                      if inf.is_target and oid not in self.rescued and oid not in self.missing)

    def known_containers(self) -> list[int]:
        return sorted(oid for oid, inf in self.info.items()
                      if inf.is_container and oid not in self.missing)

    # linear predictions ------------------------------------------------------
    def _rate(self, oid: int, attr: str):
        h = self.history[oid]
        if len(h) < 2 or h[-1].frame == h[-2].frame:
            return None
        a, b = h[-2], h[-1]
        dt = b.frame - a.frame
        if attr == "position":
            return (b.position - a.position).scale(1.0 / dt)
        if a.hazard is None or b.hazard is None:
            return None
        return (b.hazard - a.hazard) / dt

    def predict_position(self, oid: int, frame: float) -> Vec3:
        last = self.latest(oid)
        rate = self._rate(oid, "position")
        if rate is None:
            return last.position
        return last.position + rate.scale(frame - last.frame)

    def predict_hazard(self, oid: int, frame: float) -> Optional[float]:
        last = self.latest(oid)
        rate = self._rate(oid, "hazard")
        if last.hazard is None:
            return None
        if rate is None:
            return last.hazard
        return last.hazard + rate * (frame - last.frame)


def _expected_position(memory: AgentMemory, oid: int) -> Vec3:
    return memory.latest(oid).position


def memory_update(memory: AgentMemory, observation: Observation,
                  agent: Optional[AgentState] = None, grid=None) -> AgentMemory:
    """Fold one observation into memory, keeping at most ``max_history`` snapshots per object.

    With ``agent`` and ``grid`` given, remembered objects whose last position is
    in plain view but which are not visible are marked missing.
    """
    seen = set()
    for v in observation.visible:
        seen.add(v.id)
        hazard = v.temperature if v.temperature is not None else v.water_level
        snap = Snapshot(observation.frame, v.position, v.status, hazard, v.value, v.top)
        hist = memory.history.setdefault(v.id, [])
        if hist and hist[-1].frame == observation.frame:
            hist[-1] = snap
        else:
            hist.append(snap)
        if len(hist) > memory.max_history:
            del hist[: len(hist) - memory.max_history]
        memory.info[v.id] = ObjectInfo(v.category, v.is_target, v.is_container)
        memory.last_seen[v.id] = observation.frame
        memory.missing.discard(v.id)
    if agent is not None and grid is not None:
        half = math.cos(math.radians(agent.fov / 2.0))
        fwd = agent.forward
        for oid in list(memory.history):
            if oid in seen or oid in memory.rescued or oid in memory.missing:
                continue
            if oid == observation.held:
                continue
            p = _expected_position(memory, oid)
            d = observation.agent_position.horizontal_distance(p)
            if d > agent.view_range * 0.8 or d < 1e-6:
                continue
            cosang = ((p.x - agent.position.x) * fwd.x + (p.z - agent.position.z) * fwd.z) / d
            if cosang < half:
                continue
            if line_of_sight(grid, agent.position, p, agent.eye_height):
                memory.missing.add(oid)
    for cell in observation.burning_cells:
        memory.burning_cells.setdefault(cell, observation.frame)
    return memory
