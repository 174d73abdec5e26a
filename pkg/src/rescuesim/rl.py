"""Reward function and a reset/step environment for external learners.

The map observation has five channels over the navigation raster: explored
cells, static height, remembered object ids, the agent's cell and a hazard
scalar. Actions are indices into a fixed menu built from the scene's targets
and containers, so the action space never changes within an episode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .agent import DROP, EXPLORE, Action, AgentState, Executor, execute, observe
from .baselines import PlannerState
from .harness import default_frame_limit, episode_seeds, learn_from_outcome
from .memory import AgentMemory, TaskInfo, memory_update
from .physics import HazardConfig, PhysicsParams, World
from .world import Scene

RESCUE_REWARD = 20.0
HOLDING_PENALTY = -10.0
STEP_PENALTY = -0.1
# total penalty for an invalid action is -5, the step penalty included
INVALID_EXTRA = -4.9

CHANNELS = ("explored", "height", "object_id", "agent", "hazard")


@dataclass(frozen=True)
class RewardState:
    """What the reward needs from one decision step."""

    rescued: int
    holding_target: bool
    # to the nearest known target with free hands, to the nearest container when holding
    distance: float


def rl_reward(prev: RewardState, action_valid: bool, nxt: RewardState) -> float:
    """20 per new rescue, -10 while holding a target, minus distance, -0.1 per step, -4.9 more if invalid.

    The holding penalty applies on every step the agent ends holding a target.
    """
    r = RESCUE_REWARD * (nxt.rescued - prev.rescued)
    if nxt.holding_target:
        r += HOLDING_PENALTY
    r -= nxt.distance
    r += STEP_PENALTY
    if not action_valid:
        r += INVALID_EXTRA
    return r


class RescueEnv:
    """One scene as a learning environment; ``step`` runs one compressed action."""

    def __init__(self, scene: Scene, frame_limit: Optional[int] = None, *,
                 hazards: HazardConfig = HazardConfig(), physics: PhysicsParams = PhysicsParams(),
                 memory_size: int = 5):
        self.scene = scene
        self.frame_limit = default_frame_limit(scene.task) if frame_limit is None else frame_limit
        self.hazards = hazards
        self.physics = physics
        self.memory_size = memory_size
        self.targets = sorted(o.id for o in scene.targets)
        self.containers = sorted(o.id for o in scene.containers) if scene.task == "wind" else []
        menu: list[Action] = [EXPLORE, DROP]
        menu += [Action("walk_to", oid) for oid in self.targets]
        menu += [Action("pick_up", oid) for oid in self.targets]
        menu += [Action("walk_to", c) for c in self.containers]
        self.actions = menu
        self.world: Optional[World] = None

    @property
    def action_count(self) -> int:
        return len(self.actions)

    def reset(self, seed: int = 0) -> np.ndarray:
        world_seed, _ = episode_seeds(self.scene, seed)
        self.world = World(self.scene, self.hazards, self.physics, seed=world_seed)
        self.agent = AgentState.spawn(self.world)
        self.executor = Executor(self.world, self.agent, self.frame_limit)
        self.memory = AgentMemory(max_history=self.memory_size)
        self.task = TaskInfo.from_scene(self.scene, self.frame_limit, self.hazards.fire,
                                        self.hazards.wind.out_of_bounds_margin)
        self._observe()
        self.steps = 0
        self._state = self.reward_state()
        return self.observation_map()

    def _observe(self) -> None:
        memory_update(self.memory, observe(self.world, self.agent), self.agent, self.world.static_grid)

    @property
    def done(self) -> bool:
        w = self.world
        remaining = any(o.is_target and not o.rescued and not o.lost for o in w.objects)
        return self.executor.out_of_time or not remaining

    def valid(self, action: Action) -> bool:
        """Whether the action can start: known, available object and a sensible hand state."""
        mem = self.memory
        if action.kind == "explore":
            return True
        if action.kind == "drop":
            return self.agent.held is not None
        oid = action.target
        if oid not in mem.history or oid in mem.rescued or oid in mem.missing:
            return False
        if action.kind == "pick_up":
            return self.agent.held is None and mem.info[oid].is_target
        return True

    def step(self, index: int) -> tuple[np.ndarray, float, bool, dict[str, Any]]:
        if self.world is None:
            raise RuntimeError("call reset() first")
        if not 0 <= index < len(self.actions):
            raise IndexError(f"action index {index} outside 0..{len(self.actions) - 1}")
        if self.done:
            raise RuntimeError("episode is over; call reset()")
        action = self.actions[index]
        ok = self.valid(action)
        if ok:
            outcome = execute(self.executor, action)
            ok = outcome.ok
        else:
            outcome = self.executor._fail_fast("invalid action")
        for o in outcome.observations:
            memory_update(self.memory, o, self.agent, self.world.static_grid)
        self._observe()
        learn_from_outcome(self.memory, action, outcome)
        prev, self._state = self._state, self.reward_state()
        reward = rl_reward(prev, ok, self._state)
        self.steps += 1
        info = {"action": action.describe(), "status": outcome.status, "frame": self.world.frame,
                "valid": ok, "rescues": len(self.executor.rescues)}
        return self.observation_map(), reward, self.done, info

    def reward_state(self) -> RewardState:
        mem = self.memory
        pos = self.agent.position
        held = self.agent.held
        holding_target = held is not None and self.world.obj(held).is_target
        if held is not None:
            if self.agent.has_bag:
                dist = 0.0
            else:
                cs = mem.known_containers()
                dist = min((pos.horizontal_distance(mem.latest(c).position) for c in cs), default=0.0)
        else:
            ts = mem.known_targets()
            dist = min((pos.horizontal_distance(mem.latest(t).position) for t in ts), default=0.0)
        return RewardState(len(self.executor.rescues), holding_target, dist)

    def observation_map(self) -> np.ndarray:
        g = self.world.static_grid
        out = np.zeros((len(CHANNELS), g.width, g.height), dtype=np.float32)
        out[0] = self.agent.explored
        out[1] = g.height_of
        for oid, snaps in self.memory.history.items():
            if oid in self.memory.rescued or oid in self.memory.missing:
                continue
            last = snaps[-1]
            i, j = g.cell_of(last.position.x, last.position.z)
            if g.contains_cell(i, j):
                out[2, i, j] = oid
                if last.hazard is not None:
                    out[4, i, j] = last.hazard
        i, j = g.cell_of(self.agent.position.x, self.agent.position.z)
        if g.contains_cell(i, j):
            out[3, i, j] = 1.0
        if self.memory.burning_cells:
            f = self.task.fire
            for (ci, cj) in self.memory.burning_cells:
                x = self.scene.bounds.xmin + (ci + 0.5) * f.floor_cell_size
                z = self.scene.bounds.zmin + (cj + 0.5) * f.floor_cell_size
                i, j = g.cell_of(x, z)
                if g.contains_cell(i, j):
                    out[4, i, j] = max(out[4, i, j], f.flame_temperature)
        return out

    def planner_state(self) -> PlannerState:
        return PlannerState.of(self.agent, self.world.frame)


def scripted_policy(env: RescueEnv) -> int:
    """Walk to and pick up the lowest-id known target, drop when holding, else explore."""
    mem = env.memory
    if env.agent.held is not None:
        if not env.agent.has_bag:
            cs = mem.known_containers()
            if cs:
                c = min(cs, key=lambda c: env.agent.position.horizontal_distance(mem.latest(c).position))
                if env.agent.position.horizontal_distance(mem.latest(c).position) > env.agent.reach_radius * 0.95:
                    return env.actions.index(Action("walk_to", c))
        return env.actions.index(DROP)
    targets = [t for t in mem.known_targets() if mem.failures.get(t, 0) < 3]
    if not targets:
        return env.actions.index(EXPLORE)
    t = targets[0]
    if env.agent.position.horizontal_distance(mem.latest(t).position) <= env.agent.reach_radius * 0.95:
        return env.actions.index(Action("pick_up", t))
    return env.actions.index(Action("walk_to", t))


def check_map(obs: np.ndarray, env: RescueEnv) -> None:
    """Raise AssertionError when an observation map breaks the environment contract."""
    g = env.world.static_grid
    if obs.shape != (len(CHANNELS), g.width, g.height):
        raise AssertionError(f"map shape {obs.shape}")
    if not np.all(np.isfinite(obs)):
        raise AssertionError("non-finite map entry")
    if not set(np.unique(obs[0])) <= {0.0, 1.0}:
        raise AssertionError("explored channel must be binary")
    if int(obs[3].sum()) != 1:
        raise AssertionError("agent channel must mark exactly one cell")
