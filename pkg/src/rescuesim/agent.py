"""Embodied action layer: symbolic observations, timed low-level actions, compressed high-level actions.

Every consumed frame steps the world, so hazards keep evolving while the agent
walks, turns, and grasps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .navigation import PathPlan, plan_path
from .physics import FrameEvents, World, step_frame
from .vec import Vec3, angle_diff, heading_to, heading_vector
from .world import GridMap, ObjectInstance, Status, effective_value

# static cells taller than this block the agent
AGENT_BLOCK_HEIGHT = 0.3
HELD_OFFSET = 1.0
MAX_BLOCK_REPLANS = 3
MAX_TARGET_REPLANS = 20
TARGET_MOVED_REPLAN = 0.5


class ActionError(ValueError):
    """An action request that cannot even be attempted (unknown id, bad kind)."""


@dataclass
class AgentState:
    position: Vec3
    heading: float
    held: Optional[int] = None
    # fire/flood agents carry the bag container in the other hand
    has_bag: bool = True
    speed: float = 0.05  # m/frame
    turn_rate: float = 15.0  # deg/frame
    reach_radius: float = 1.0
    fov: float = 90.0
    view_range: float = 10.0
    eye_height: float = 1.5
    reach_frames: int = 10
    reset_arm_frames: int = 10
    drop_frames: int = 5
    explored: Optional[np.ndarray] = None

    @classmethod
    def spawn(cls, world: World, **overrides) -> "AgentState":
        pos, heading = world.scene.agent_spawn
        agent = cls(position=Vec3(pos.x, 0.0, pos.z), heading=heading % 360.0,
                    has_bag=world.task != "wind", **overrides)
        g = world.static_grid
        agent.explored = np.zeros((g.width, g.height), dtype=bool)
        return agent

    @property
    def forward(self) -> Vec3:
        return heading_vector(self.heading)

    @property
    def approach_radius(self) -> float:
        # stop short of the reach limit so a grasp still succeeds if the object drifts a little
        return 0.8 * self.reach_radius


@dataclass(frozen=True)
class VisibleObject:
    id: int
    category: str
    position: Vec3
    distance: float
    status: str
    temperature: Optional[float]
    water_level: Optional[float]
    value: float
    is_target: bool
    is_container: bool
    top: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id, "category": self.category, "position": list(self.position),
            "distance": self.distance, "status": self.status, "temperature": self.temperature,
            "water_level": self.water_level, "value": self.value, "is_target": self.is_target,
            "is_container": self.is_container, "top": self.top,
        }


@dataclass
class Observation:
    frame: int
    visible: list[VisibleObject]
    agent_position: Vec3
    agent_heading: float
    held: Optional[int]
    explored_delta: int
    # fire task: burning floor cells currently in view, in fire-grid indices
    burning_cells: list[tuple[int, int]] = field(default_factory=list)

    def by_id(self, oid: int) -> Optional[VisibleObject]:
        for v in self.visible:
            if v.id == oid:
                return v
        return None


@dataclass
class RescueRecord:
    object_id: int
    frame: int
    damaged: bool
    value: float

    def to_dict(self) -> dict[str, Any]:
        return {"object_id": self.object_id, "frame": self.frame, "damaged": self.damaged,
                "value": self.value}


@dataclass(frozen=True)
class Action:
    kind: str
    target: Optional[int] = None
    amount: float = 0.0
    one_step: bool = False

    def describe(self) -> str:
        if self.kind in ("explore", "drop", "reset_arm"):
            return self.kind
        if self.kind in ("move_by", "turn_by"):
            return f"{self.kind}({self.amount:g})"
        suffix = ", one_step" if self.one_step else ""
        return f"{self.kind}({self.target}{suffix})"

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "target": self.target, "amount": self.amount, "one_step": self.one_step}


EXPLORE = Action("explore")
DROP = Action("drop")


@dataclass
class ActionOutcome:
    status: str  # success | failure | interrupted
    frames_consumed: int
    reason: str = ""
    observations: list[Observation] = field(default_factory=list)
    rescues: list[RescueRecord] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "success"


# -- observation ---------------------------------------------------------------

def _cone_mask(xs: np.ndarray, zs: np.ndarray, agent: AgentState) -> np.ndarray:
    dx = xs - agent.position.x
    dz = zs - agent.position.z
    dist = np.hypot(dx, dz)
    fwd = agent.forward
    cosang = (dx * fwd.x + dz * fwd.z) / np.maximum(dist, 1e-9)
    half = math.cos(math.radians(agent.fov / 2.0))
    return (dist <= agent.view_range) & ((cosang >= half - 1e-12) | (dist < 0.5))


def line_of_sight(grid: GridMap, a: Vec3, b: Vec3, eye_height: float) -> bool:
    """Ray-march the static raster; blocked by any cell taller than eye height."""
    end_cell = grid.cell_of(b.x, b.z)
    start_cell = grid.cell_of(a.x, a.z)
    dist = a.horizontal_distance(b)
    steps = int(dist / (grid.cell_size * 0.5)) + 1
    for k in range(1, steps):
        t = k / steps
        c = grid.cell_of(a.x + (b.x - a.x) * t, a.z + (b.z - a.z) * t)
        if c == end_cell or c == start_cell:
            continue
        if grid.height_of[c] > eye_height:
            return False
    return True


def observe(world: World, agent: AgentState) -> Observation:
    """Symbolic ground-truth view: objects in the view cone with line of sight."""
    visible = []
    fwd = agent.forward
    half = math.cos(math.radians(agent.fov / 2.0))
    for o in world.scene.objects:
        if not o.active:
            continue
        d = agent.position.horizontal_distance(o.position)
        if d > agent.view_range:
            continue
        if d > 1e-9:
            cosang = ((o.position.x - agent.position.x) * fwd.x + (o.position.z - agent.position.z) * fwd.z) / d
            if cosang < half - 1e-12:
                continue
        if not line_of_sight(world.static_grid, agent.position, o.position, agent.eye_height):
            continue
        visible.append(VisibleObject(
            id=o.id,
            category=o.category.name,
            position=o.position,
            distance=d,
            status=o.status.value,
            temperature=o.temperature if world.task == "fire" else None,
            water_level=world.water_height(o.position) if world.task == "flood" else None,
            value=o.category.value,
            is_target=o.is_target,
            is_container=o.is_container,
            top=o.top,
        ))
    visible.sort(key=lambda v: v.id)

    g = world.static_grid
    xs, zs = g.cell_centers()
    cone = _cone_mask(xs, zs, agent)
    if agent.explored is None:
        agent.explored = np.zeros((g.width, g.height), dtype=bool)
    new = cone & ~agent.explored
    agent.explored |= cone

    burning: list[tuple[int, int]] = []
    if world.fire is not None:
        f = world.fire.field
        fx = f.origin[0] + (np.arange(f.width) + 0.5) * f.cell_size
        fz = f.origin[1] + (np.arange(f.height) + 0.5) * f.cell_size
        FX, FZ = np.meshgrid(fx, fz, indexing="ij")
        seen = _cone_mask(FX, FZ, agent) & f.burning_mask
        ii, jj = np.nonzero(seen)
        burning = [(int(i), int(j)) for i, j in zip(ii, jj)]

    return Observation(frame=world.frame, visible=visible, agent_position=agent.position,
                       agent_heading=agent.heading, held=agent.held,
                       explored_delta=int(new.sum()), burning_cells=burning)


# -- execution -------------------------------------------------------------------

class Executor:
    """Runs actions for one agent against one world under a frame budget."""

    def __init__(self, world: World, agent: AgentState, frame_limit: int,
                 on_frame: Optional[Callable[[FrameEvents], None]] = None):
        self.world = world
        self.agent = agent
        self.frame_limit = frame_limit
        self.on_frame = on_frame
        self.rescues: list[RescueRecord] = []
        self._blocked_mask: Optional[np.ndarray] = None

    # time ------------------------------------------------------------------
    @property
    def out_of_time(self) -> bool:
        return self.world.frame >= self.frame_limit

    def tick(self) -> bool:
        """Consume one frame; False (and no step) once the budget is spent."""
        if self.out_of_time:
            return False
        events = step_frame(self.world)
        self._carry_held()
        if self.on_frame is not None:
            self.on_frame(events)
        return True

    def _carry_held(self) -> None:
        if self.agent.held is not None:
            o = self.world.obj(self.agent.held)
            o.position = Vec3(self.agent.position.x, HELD_OFFSET, self.agent.position.z)

    def _ticks(self, n: int) -> int:
        done = 0
        for _ in range(n):
            if not self.tick():
                break
            done += 1
        return done

    # geometry ----------------------------------------------------------------
    @property
    def blocked_mask(self) -> np.ndarray:
        if self._blocked_mask is None:
            self._blocked_mask = self.world.static_grid.height_of > AGENT_BLOCK_HEIGHT
        return self._blocked_mask

    def point_blocked(self, p: Vec3) -> bool:
        if not self.world.scene.bounds.contains(p.x, p.z):
            return True
        for s in self.world.scene.statics:
            if s.top > AGENT_BLOCK_HEIGHT and s.center.y - s.half_extents.y < self.agent.eye_height \
                    and s.footprint_contains(p.x, p.z):
                return True
        w = self.world
        if w.params.agent_effects_enabled and w.fire is not None:
            if w.temperature_at(Vec3(p.x, 0.5, p.z)) > w.params.agent_heat_limit:
                return True
        return False

    def speed_factor(self) -> float:
        w = self.world
        if not w.params.agent_effects_enabled or w.task == "fire":
            return 1.0
        flow = w.flow_at(self.agent.position)
        if flow.norm() == 0.0:
            return 1.0
        against = max(0.0, flow.unit().dot(-self.agent.forward))
        return max(0.3, 1.0 - w.params.headwind_coefficient * against)

    # low level -----------------------------------------------------------------
    def move_by(self, distance: float) -> ActionOutcome:
        remaining = max(0.0, float(distance))
        frames = 0
        while True:
            step = min(self.agent.speed * self.speed_factor(), remaining)
            nxt = self.agent.position + self.agent.forward.scale(step)
            if step > 0 and self.point_blocked(nxt):
                if not self.tick():
                    return ActionOutcome("interrupted", frames, "frame limit")
                return ActionOutcome("failure", frames + 1, "blocked")
            if not self.tick():
                return ActionOutcome("interrupted", frames, "frame limit")
            frames += 1
            self.agent.position = nxt
            self._carry_held()
            remaining -= step
            if remaining <= 1e-9:
                return ActionOutcome("success", frames)

    def turn_by(self, degrees: float) -> ActionOutcome:
        remaining = float(degrees)
        frames = 0
        while True:
            step = max(-self.agent.turn_rate, min(self.agent.turn_rate, remaining))
            if not self.tick():
                return ActionOutcome("interrupted", frames, "frame limit")
            frames += 1
            self.agent.heading = (self.agent.heading + step) % 360.0
            remaining -= step
            if abs(remaining) <= 1e-9:
                return ActionOutcome("success", frames)

    def turn_to_point(self, point: Vec3) -> ActionOutcome:
        if self.agent.position.horizontal_distance(point) < 1e-9:
            return self.turn_by(0.0)
        return self.turn_by(angle_diff(self.agent.heading, heading_to(self.agent.position, point)))

    def _object(self, oid: Optional[int]) -> ObjectInstance:
        if oid is None:
            raise ActionError("action needs a target id")
        try:
            return self.world.obj(oid)
        except KeyError:
            raise ActionError(f"unknown object id {oid}") from None

    def turn_to(self, oid: int) -> ActionOutcome:
        return self.turn_to_point(self._object(oid).position)

    def reach_for(self, oid: int) -> ActionOutcome:
        o = self._object(oid)
        done = self._ticks(self.agent.reach_frames)
        if done < self.agent.reach_frames:
            return ActionOutcome("interrupted", done, "frame limit")
        if not o.active:
            return ActionOutcome("failure", done, "object unavailable")
        if self.agent.position.horizontal_distance(o.position) > self.agent.reach_radius:
            return ActionOutcome("failure", done, "out of reach")
        return ActionOutcome("success", done)

    def reset_arm(self) -> ActionOutcome:
        done = self._ticks(self.agent.reset_arm_frames)
        if done < self.agent.reset_arm_frames:
            return ActionOutcome("interrupted", done, "frame limit")
        return ActionOutcome("success", done)

    def _fail_fast(self, reason: str) -> ActionOutcome:
        # a refused action still costs one frame
        if not self.tick():
            return ActionOutcome("interrupted", 0, "frame limit")
        return ActionOutcome("failure", 1, reason)

    # high level --------------------------------------------------------------
    def explore(self) -> ActionOutcome:
        frames = 0
        observations = []
        for _ in range(8):
            out = self.turn_by(45.0)
            frames += out.frames_consumed
            if out.status != "success":
                return ActionOutcome(out.status, frames, out.reason, observations)
            observations.append(observe(self.world, self.agent))
        return ActionOutcome("success", frames, observations=observations)

    def _plan(self, goal: Vec3, one_step: bool) -> Optional[PathPlan]:
        grid = self.world.nav_grid()
        return plan_path(grid, self.agent.position, goal, goal_radius=self.agent.approach_radius,
                         blocked=self.blocked_mask, one_step=one_step)

    def walk_to(self, oid: int, one_step: bool = False) -> ActionOutcome:
        target = self._object(oid)
        if not target.active:
            return self._fail_fast("target unavailable")
        frames = 0
        observations: list[Observation] = []
        block_replans = 0
        target_replans = 0
        radius = self.agent.approach_radius

        def reached() -> bool:
            return self.agent.position.horizontal_distance(target.position) <= radius

        if reached():
            out = self.turn_to_point(target.position)
            out.observations = [observe(self.world, self.agent)]
            return out

        while True:
            goal = target.position
            plan = self._plan(goal, one_step)
            if plan is None:
                if frames == 0:
                    return self._fail_fast("no path")
                return ActionOutcome("failure", frames, "no path", observations)
            replan = False
            # start cell already counts as arrived but we are not: head straight for the object
            waypoints = plan.waypoints or [Vec3(goal.x, 0.0, goal.z)]
            for wp in waypoints:
                out = self.turn_to_point(wp)
                frames += out.frames_consumed
                if out.status != "success":
                    return ActionOutcome(out.status, frames, out.reason, observations)
                while True:
                    if not target.active:
                        return ActionOutcome("failure", frames, "target lost", observations)
                    if not one_step and reached():
                        out = self.turn_to_point(target.position)
                        frames += out.frames_consumed
                        observations.append(observe(self.world, self.agent))
                        return ActionOutcome(out.status, frames, out.reason, observations)
                    d = self.agent.position.horizontal_distance(wp)
                    if d <= 1e-9:
                        break
                    step = min(self.agent.speed * self.speed_factor(), d)
                    direction = Vec3(wp.x - self.agent.position.x, 0.0, wp.z - self.agent.position.z).unit()
                    nxt = self.agent.position + direction.scale(step)
                    if self.point_blocked(nxt):
                        if not self.tick():
                            return ActionOutcome("interrupted", frames, "frame limit", observations)
                        frames += 1
                        block_replans += 1
                        if block_replans > MAX_BLOCK_REPLANS:
                            return ActionOutcome("failure", frames, "blocked", observations)
                        replan = True
                        break
                    if not self.tick():
                        return ActionOutcome("interrupted", frames, "frame limit", observations)
                    frames += 1
                    self.agent.position = nxt if step < d else Vec3(wp.x, 0.0, wp.z)
                    self._carry_held()
                if replan:
                    break
                observations.append(observe(self.world, self.agent))
                if one_step:
                    return ActionOutcome("success", frames, observations=observations)
                if target.position.horizontal_distance(goal) > TARGET_MOVED_REPLAN:
                    replan = True
                    break
            if not target.active:
                return ActionOutcome("failure", frames, "target lost", observations)
            target_replans += 1
            if target_replans > MAX_TARGET_REPLANS:
                return ActionOutcome("failure", frames, "target not reached", observations)
            if frames == 0:
                # an empty plan that does not reach the goal can only mean we are stuck
                return self._fail_fast("no progress")

    def pick_up(self, oid: int) -> ActionOutcome:
        o = self._object(oid)
        if self.agent.held is not None:
            return self._fail_fast("hands full")
        if o.is_container:
            return self._fail_fast("containers cannot be picked up")
        if not o.active:
            return self._fail_fast("object unavailable")
        frames = 0
        for step in (lambda: self.turn_to(oid), lambda: self.reach_for(oid)):
            out = step()
            frames += out.frames_consumed
            if out.status != "success":
                return ActionOutcome(out.status, frames, out.reason)
        o.held_by = "right"
        o.anchor = o.position
        o.velocity = Vec3()
        o.yaw_rate = 0.0
        self.agent.held = oid
        self._carry_held()
        out = self.reset_arm()
        frames += out.frames_consumed
        return ActionOutcome(out.status, frames, out.reason)

    def nearest_container(self) -> Optional[ObjectInstance]:
        best = None
        best_d = math.inf
        for o in self.world.scene.objects:
            if o.is_container and not o.lost:
                d = self.agent.position.horizontal_distance(o.position)
                if d < best_d:
                    best, best_d = o, d
        return best

    def drop(self) -> ActionOutcome:
        if self.agent.held is None:
            return self._fail_fast("nothing held")
        if not self.agent.has_bag:
            c = self.nearest_container()
            if c is None or self.agent.position.horizontal_distance(c.position) > self.agent.reach_radius:
                return self._fail_fast("no container in reach")
        done = self._ticks(self.agent.drop_frames)
        if done < self.agent.drop_frames:
            return ActionOutcome("interrupted", done, "frame limit")
        o = self.world.obj(self.agent.held)
        o.held_by = None
        o.rescued = True
        self.agent.held = None
        record = RescueRecord(o.id, self.world.frame, o.damaged, effective_value(o)) if o.is_target else None
        if record is not None:
            self.rescues.append(record)
        return ActionOutcome("success", done, rescues=[record] if record else [])


_LOW_LEVEL = ("move_by", "turn_by", "turn_to", "reach_for", "reset_arm")
_HIGH_LEVEL = ("explore", "walk_to", "pick_up", "drop")


def execute_low_level(ex: Executor, action: Action) -> ActionOutcome:
    if action.kind == "move_by":
        return ex.move_by(action.amount)
    if action.kind == "turn_by":
        return ex.turn_by(action.amount)
    if action.kind == "turn_to":
        return ex.turn_to(action.target)
    if action.kind == "reach_for":
        return ex.reach_for(action.target)
    if action.kind == "reset_arm":
        return ex.reset_arm()
    raise ActionError(f"not a low-level action: {action.kind!r}")


def execute_high_level(ex: Executor, action: Action) -> ActionOutcome:
    if action.kind == "explore":
        return ex.explore()
    if action.kind == "walk_to":
        return ex.walk_to(action.target, one_step=action.one_step)
    if action.kind == "pick_up":
        return ex.pick_up(action.target)
    if action.kind == "drop":
        return ex.drop()
    raise ActionError(f"not a high-level action: {action.kind!r}")


def execute(ex: Executor, action: Action) -> ActionOutcome:
    if action.kind in _HIGH_LEVEL:
        return execute_high_level(ex, action)
    if action.kind in _LOW_LEVEL:
        return execute_low_level(ex, action)
    raise ActionError(f"unknown action kind {action.kind!r}")
