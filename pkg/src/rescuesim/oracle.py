"""Full-information rescue planner used for demonstrations and as an upper bound.

The hazards never depend on the agent (custody only freezes the held body), so
one agent-free rollout gives every object's trajectory, damage frame and loss
frame. Plans are then timed with idealized actions: straight-line walking with
no turning and guaranteed grasps. Orderings are searched depth first with a
value bound, and a partial plan is dropped when the same set of rescues was
already reached at the same last stop no later and with no less value. The
best plan has the highest value, then the fewest frames.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import rng as rngmod
from .agent import AgentState
from .physics import HazardConfig, PhysicsParams, World, step_frame
from .world import Scene


@dataclass
class Rollout:
    """Agent-free trajectories: ``positions[k][t]`` is object k's (x, z) after t frames."""

    ids: list[int]
    positions: np.ndarray  # (objects, frames + 1, 2)
    damage_frame: dict[int, float]  # step index at which damage latched, inf if never
    lost_frame: dict[int, float]

    def __post_init__(self) -> None:
        self._index = {oid: k for k, oid in enumerate(self.ids)}
        self.static = [bool(np.all(traj == traj[0])) for traj in self.positions]

    def index(self, oid: int) -> int:
        return self._index[oid]

    def position(self, oid: int, t: float) -> np.ndarray:
        traj = self.positions[self.index(oid)]
        return traj[min(int(t), len(traj) - 1)]


def rollout_world(scene: Scene, frames: int, *, seed: int = 0, hazards: HazardConfig = HazardConfig(),
                  physics: PhysicsParams = PhysicsParams()) -> Rollout:
    """Run the hazards alone for ``frames`` frames with the episode's world seed."""
    world = World(scene, hazards, physics, seed=rngmod.derive_seed(scene.seed, "world", seed))
    objs = [o for o in world.objects if o.is_target or o.is_container]
    ids = [o.id for o in objs]
    pos = np.zeros((len(objs), frames + 1, 2))
    damage = {oid: math.inf for oid in ids}
    lost = {oid: math.inf for oid in ids}
    for k, o in enumerate(objs):
        pos[k, 0] = (o.position.x, o.position.z)
        if o.damaged:
            damage[o.id] = -1.0
    for t in range(frames):
        ev = step_frame(world)
        for oid in ev.damages:
            damage[oid] = min(damage.get(oid, math.inf), float(t))
        for oid in ev.blown_out:
            lost[oid] = min(lost.get(oid, math.inf), float(t))
        for k, o in enumerate(objs):
            pos[k, t + 1] = (o.position.x, o.position.z)
    return Rollout(ids, pos, damage, lost)


@dataclass(frozen=True)
class PlanStep:
    target: int
    container: Optional[int]
    custody_frame: int
    finish_frame: int
    value: float
    damaged: bool


@dataclass
class OraclePlan:
    steps: list[PlanStep] = field(default_factory=list)
    value: float = 0.0
    frames: int = 0
    total_value: float = 0.0

    @property
    def order(self) -> list[int]:
        return [s.target for s in self.steps]

    @property
    def value_rate(self) -> float:
        """Rescued value as a percentage of all target value, like the Value metric."""
        return 100.0 * self.value / self.total_value if self.total_value else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {"plan": [{"target": s.target, "container": s.container, "custody_frame": s.custody_frame,
                          "finish_frame": s.finish_frame, "value": s.value, "damaged": s.damaged}
                         for s in self.steps],
                "value": self.value, "value_rate": self.value_rate, "frames": self.frames}


@dataclass(frozen=True)
class OracleTiming:
    speed: float = 0.05
    approach_radius: float = 0.8
    reach_frames: int = 10
    reset_frames: int = 10
    drop_frames: int = 5

    @classmethod
    def from_agent(cls, agent: AgentState) -> "OracleTiming":
        return cls(agent.speed, agent.approach_radius, agent.reach_frames, agent.reset_arm_frames,
                   agent.drop_frames)


def _arrive(ro: Rollout, oid: int, start: np.ndarray, t0: int, timing: OracleTiming,
            horizon: int) -> Optional[tuple[int, np.ndarray]]:
    """First frame the straight-walking agent is within the approach radius of ``oid``, and where it stands."""
    k = ro.index(oid)
    traj = ro.positions[k]
    if ro.static[k]:
        p = traj[0]
        dist = float(np.hypot(p[0] - start[0], p[1] - start[1]))
        if dist <= timing.approach_radius:
            return (t0, start) if t0 <= horizon else None
        t = t0 + int(math.ceil((dist - timing.approach_radius) / timing.speed - 1e-9))
        if t > horizon:
            return None
        return t, p + (start - p) * (timing.approach_radius / dist)
    last = len(traj) - 1
    ts = np.arange(t0, horizon + 1)
    if not len(ts):
        return None
    pts = traj[np.minimum(ts, last)]
    d = np.hypot(pts[:, 0] - start[0], pts[:, 1] - start[1])
    ok = np.nonzero(d - timing.approach_radius <= timing.speed * (ts - t0) + 1e-9)[0]
    if not len(ok):
        return None
    k = int(ok[0])
    p, dist = pts[k], float(d[k])
    if dist <= timing.approach_radius:
        return int(ts[k]), start
    return int(ts[k]), p + (start - p) * (timing.approach_radius / dist)


class _Search:
    def __init__(self, scene: Scene, ro: Rollout, frame_limit: int, timing: OracleTiming):
        self.ro = ro
        self.limit = frame_limit
        self.timing = timing
        self.values = {o.id: float(o.category.value) for o in scene.targets}
        self.targets = sorted(self.values)
        self.containers = sorted(o.id for o in scene.containers) if scene.task == "wind" else []
        self.bag = scene.task != "wind"
        self.best = OraclePlan(total_value=sum(self.values.values()))
        self.nodes = 0
        # (remaining, last target, container) -> (frame, value) pairs already expanded
        self.seen: dict[tuple, list[tuple[int, float]]] = {}

    def leg(self, oid: int, pos: np.ndarray, t0: int) -> list[tuple[PlanStep, np.ndarray]]:
        tm = self.timing
        ro = self.ro
        hit = _arrive(ro, oid, pos, t0, tm, self.limit)
        if hit is None:
            return []
        t_a, at = hit
        custody = t_a + tm.reach_frames
        if custody > self.limit or ro.lost_frame.get(oid, math.inf) < custody:
            return []
        damaged = ro.damage_frame.get(oid, math.inf) < custody
        value = self.values[oid] / (2.0 if damaged else 1.0)
        ready = custody + tm.reset_frames
        out = []
        if self.bag:
            finish = ready + tm.drop_frames
            if finish <= self.limit:
                out.append((PlanStep(oid, None, custody, finish, value, damaged), at))
            return out
        for c in self.containers:
            if ro.lost_frame.get(c, math.inf) < ready:
                continue
            hc = _arrive(ro, c, at, ready, tm, self.limit)
            if hc is None:
                continue
            finish = hc[0] + tm.drop_frames
            if finish <= self.limit:
                out.append((PlanStep(oid, c, custody, finish, value, damaged), hc[1]))
        return out

    def better(self, value: float, frames: int) -> bool:
        if value > self.best.value + 1e-9:
            return True
        return abs(value - self.best.value) <= 1e-9 and frames < self.best.frames

    def dominated(self, key: tuple, t: int, value: float) -> bool:
        """True if this subset was already reached, ending at the same place, no later and with no less value."""
        entries = self.seen.setdefault(key, [])
        for t2, v2 in entries:
            if t2 <= t and v2 >= value - 1e-9:
                return True
        entries[:] = [(t2, v2) for t2, v2 in entries if not (t <= t2 and value >= v2 - 1e-9)]
        entries.append((t, value))
        return False

    def promising(self, bound: float, t: int) -> bool:
        """Whether a branch with this value bound, already at frame t, could still win."""
        if bound > self.best.value + 1e-9:
            return True
        return bound >= self.best.value - 1e-9 and t < self.best.frames

    def bound(self, remaining: list[int], t: int) -> float:
        """Optimistic value of the remaining targets if they were secured right now."""
        total = 0.0
        for oid in remaining:
            if self.ro.lost_frame.get(oid, math.inf) < t:
                continue
            total += self.values[oid] / (2.0 if self.ro.damage_frame.get(oid, math.inf) < t else 1.0)
        return total

    def run(self, start: np.ndarray) -> OraclePlan:
        self._dfs(start, 0, list(self.targets), [], 0.0)
        return self.best

    def _dfs(self, pos: np.ndarray, t: int, remaining: list[int], steps: list[PlanStep], value: float) -> None:
        self.nodes += 1
        if self.better(value, t if steps else 0):
            self.best = OraclePlan(list(steps), value, t if steps else 0, self.best.total_value)
        if not remaining:
            return
        if not self.promising(value + self.bound(remaining, t), t):
            return
        if steps and self.dominated((frozenset(remaining), steps[-1].target, steps[-1].container), t, value):
            return
        # expand the quickest rescues first so a strong incumbent appears early
        options = [(step, end, oid) for oid in remaining for step, end in self.leg(oid, pos, t)]
        options.sort(key=lambda x: (x[0].finish_frame, -x[0].value, x[2]))
        for step, end, oid in options:
            rest = [r for r in remaining if r != oid]
            if not self.promising(value + step.value + self.bound(rest, step.finish_frame), step.finish_frame):
                continue
            steps.append(step)
            self._dfs(end, step.finish_frame, rest, steps, value + step.value)
            steps.pop()


def oracle_plan(scene: Scene, frame_limit: int, *, seed: int = 0, hazards: HazardConfig = HazardConfig(),
                physics: PhysicsParams = PhysicsParams(), timing: Optional[OracleTiming] = None,
                rollout: Optional[Rollout] = None) -> OraclePlan:
    """Highest-value rescue ordering under idealized actions; ties go to the fewest frames.

    ``seed`` selects the same world stream as an episode run with that seed,
    so the plan is an upper bound for agents evaluated on it.
    """
    if timing is None:
        timing = OracleTiming()
    ro = rollout if rollout is not None else rollout_world(scene, frame_limit, seed=seed, hazards=hazards,
                                                            physics=physics)
    search = _Search(scene, ro, frame_limit, timing)
    start = np.array([scene.agent_spawn[0].x, scene.agent_spawn[0].z])
    return search.run(start)


def write_demonstrations(entries: list[tuple[str, Scene]], frame_limit: int, path: str | os.PathLike,
                         seed: int = 0) -> list[dict[str, Any]]:
    """One JSON line per scene: ``{scene, plan, value, frames}``."""
    records = []
    for name, scene in entries:
        plan = oracle_plan(scene, frame_limit, seed=seed)
        d = plan.to_dict()
        records.append({"scene": name, "plan": d["plan"], "value": d["value_rate"], "frames": d["frames"]})
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return records
