"""Heuristic costs and the random, rule-based and greedy decision makers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .agent import DROP, EXPLORE, Action, ActionOutcome, AgentState, Observation
from .forecast import TargetForecast, forecast_targets
from .memory import AgentMemory, TaskInfo
from .vec import Vec3, angle_diff, heading_to

# a target is skipped after this many failed walk/pick attempts
MAX_TARGET_FAILURES = 3


@dataclass(frozen=True)
class HeuristicCosts:
    """Frame estimates for plan segments."""

    speed: float = 0.05  # m/frame
    turn_rate: float = 15.0  # deg/frame
    grasp_cost: float = 21.0  # settle turn + reach + arm reset
    reach_frames: float = 10.0
    drop_cost: float = 5.0
    exploration_cost: float = 24.0  # eight 45 degree turns
    reach_radius: float = 1.0
    # walk_to stops this far from a target; 0 charges the full distance
    approach_radius: float = 0.0

    def __post_init__(self) -> None:
        for name in ("speed", "turn_rate", "grasp_cost", "drop_cost", "exploration_cost", "reach_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @classmethod
    def from_agent(cls, agent: AgentState) -> "HeuristicCosts":
        return cls(speed=agent.speed, turn_rate=agent.turn_rate,
                   grasp_cost=1.0 + agent.reach_frames + agent.reset_arm_frames,
                   reach_frames=float(agent.reach_frames), drop_cost=float(agent.drop_frames),
                   exploration_cost=360.0 / agent.turn_rate, reach_radius=agent.reach_radius,
                   approach_radius=agent.approach_radius)

    def navigation_cost(self, distance: float) -> float:
        return distance / self.speed

    def turn_cost(self, degrees: float) -> float:
        return abs(degrees) / self.turn_rate


@dataclass(frozen=True)
class PlannerState:
    position: Vec3
    heading: float
    frame: int
    held: Optional[int] = None
    has_bag: bool = True

    @classmethod
    def of(cls, agent: AgentState, frame: int) -> "PlannerState":
        return cls(agent.position, agent.heading, frame, agent.held, agent.has_bag)


@dataclass(frozen=True)
class RescuePlan:
    """Rescue ``target`` (already held if it equals the held id), via ``container`` in wind."""

    target: Optional[int]
    container: Optional[int] = None
    explore: bool = False


@dataclass(frozen=True)
class PlanEstimate:
    navigation: float
    turn: float
    grasp: float
    drop: float
    exploration: float
    custody_frame: float
    finish_frame: float
    expected_value: float
    end_position: Vec3
    end_heading: float

    @property
    def total(self) -> float:
        return self.navigation + self.turn + self.grasp + self.drop + self.exploration


def _leg(pos: Vec3, heading: float, goal: Vec3, costs: HeuristicCosts,
         stop: float = 0.0) -> tuple[float, float, float, Vec3]:
    """Navigation and turn frames, end heading and end point of one walk that halts ``stop`` short."""
    d = pos.horizontal_distance(goal)
    if d < 1e-9:
        return 0.0, 0.0, heading, pos
    h = heading_to(pos, goal)
    walk = max(0.0, d - stop)
    end = Vec3(pos.x + (goal.x - pos.x) * walk / d, pos.y, pos.z + (goal.z - pos.z) * walk / d) if walk < d else goal
    return costs.navigation_cost(walk), costs.turn_cost(angle_diff(heading, h)), h, end


def heuristic_cost(memory: AgentMemory, state: PlannerState, plan: RescuePlan, task: TaskInfo,
                   costs: HeuristicCosts = HeuristicCosts(),
                   forecasts: Optional[dict[int, TargetForecast]] = None) -> PlanEstimate:
    """Frame cost and expected payoff of one rescue plan.

    The target's position is extrapolated linearly to the arrival time (two
    passes), and the payoff is halved when damage is forecast before custody.
    """
    if plan.explore:
        return PlanEstimate(0.0, 0.0, 0.0, 0.0, costs.exploration_cost, math.inf,
                            state.frame + costs.exploration_cost, 0.0, state.position, state.heading)
    oid = plan.target
    if oid is None or oid not in memory.history:
        raise KeyError(f"target {oid} is not in memory")
    pos, heading, t0 = state.position, state.heading, float(state.frame)
    nav = turn = grasp = 0.0
    custody = t0
    if state.held != oid:
        goal = memory.predict_position(oid, t0)
        for _ in range(2):
            nav, turn, _, _ = _leg(pos, heading, goal, costs, costs.approach_radius)
            goal = memory.predict_position(oid, t0 + nav + turn)
        nav, turn, heading, pos = _leg(pos, heading, goal, costs, costs.approach_radius)
        grasp = costs.grasp_cost
        custody = t0 + nav + turn + 1.0 + costs.reach_frames
    if plan.container is not None:
        cpos = memory.latest(plan.container).position
        n2, t2, heading, pos = _leg(pos, heading, cpos, costs, costs.approach_radius)
        nav += n2
        turn += t2
    drop = costs.drop_cost
    total = nav + turn + grasp + drop
    if forecasts is not None and oid in forecasts:
        fc = forecasts[oid]
    else:
        fc = forecast_targets(memory, task, state.frame, [oid])[oid]
    value = fc.value_if_secured(custody) if state.held != oid else fc.value_if_secured(-1.0)
    return PlanEstimate(nav, turn, grasp, drop, 0.0, custody, t0 + total, value, pos, heading)


# -- shared helpers -------------------------------------------------------------

def candidate_targets(memory: AgentMemory, held: Optional[int] = None) -> list[int]:
    return [oid for oid in memory.known_targets()
            if oid != held and memory.failures.get(oid, 0) < MAX_TARGET_FAILURES]


def nearest(memory: AgentMemory, ids: list[int], point: Vec3, frame: int) -> Optional[int]:
    best, best_d = None, math.inf
    for oid in ids:
        d = point.horizontal_distance(memory.predict_position(oid, frame))
        if d < best_d - 1e-12:
            best, best_d = oid, d
    return best


def in_reach(memory: AgentMemory, oid: int, state: PlannerState, reach: float) -> bool:
    return state.position.horizontal_distance(memory.predict_position(oid, state.frame)) <= reach * 0.95


def nearest_container(memory: AgentMemory, state: PlannerState) -> Optional[int]:
    return nearest(memory, memory.known_containers(), state.position, state.frame)


def deliver(memory: AgentMemory, state: PlannerState, reach: float,
            container: Optional[int] = None) -> Action:
    """Action that progresses delivery of the held object."""
    if state.has_bag:
        return DROP
    c = container if container is not None else nearest_container(memory, state)
    if c is None:
        return EXPLORE
    if state.position.horizontal_distance(memory.latest(c).position) <= reach * 0.95:
        return DROP
    return Action("walk_to", c)


# -- random ------------------------------------------------------------------

RANDOM_OPTIONS = ("walk_nearest_target", "walk_nearest_container", "pick_up_nearest", "drop",
                  "explore", "walk_random_visible")


def random_options(observation: Observation, memory: AgentMemory, state: PlannerState,
                   reach: float = 1.0) -> list[str]:
    """The currently valid entries of the random agent's six options, in fixed order."""
    opts: list[str] = []
    near_t = nearest(memory, candidate_targets(memory, state.held), state.position, state.frame)
    if near_t is not None:
        opts.append("walk_nearest_target")
    if not state.has_bag and nearest_container(memory, state) is not None:
        opts.append("walk_nearest_container")
    if state.held is None and near_t is not None and in_reach(memory, near_t, state, reach):
        opts.append("pick_up_nearest")
    if state.held is not None:
        opts.append("drop")
    opts.append("explore")
    if any(v.id != state.held for v in observation.visible):
        opts.append("walk_random_visible")
    return opts


def random_policy(observation: Observation, memory: AgentMemory, state: PlannerState,
                  rng: np.random.Generator, reach: float = 1.0) -> Action:
    opts = random_options(observation, memory, state, reach)
    choice = opts[int(rng.integers(len(opts)))]
    if choice == "walk_nearest_target":
        return Action("walk_to", nearest(memory, candidate_targets(memory, state.held), state.position,
                                         state.frame), one_step=True)
    if choice == "walk_nearest_container":
        return Action("walk_to", nearest_container(memory, state), one_step=True)
    if choice == "pick_up_nearest":
        return Action("pick_up", nearest(memory, candidate_targets(memory), state.position, state.frame))
    if choice == "drop":
        return DROP
    if choice == "walk_random_visible":
        visible = sorted(v.id for v in observation.visible if v.id != state.held)
        return Action("walk_to", visible[int(rng.integers(len(visible)))])
    return EXPLORE


# -- rule-based --------------------------------------------------------------

@dataclass
class RulePlan:
    target: Optional[int] = None
    container: Optional[int] = None


def rule_policy(observation: Observation, memory: AgentMemory, state: PlannerState,
                rng: np.random.Generator, plan: RulePlan, reach: float = 1.0) -> Action:
    """Committed plan: random target, walk to it, pick it up, (walk to a random cart,) drop."""
    if state.held is not None:
        if not state.has_bag:
            containers = memory.known_containers()
            if plan.container not in containers:
                plan.container = containers[int(rng.integers(len(containers)))] if containers else None
            if plan.container is None:
                return EXPLORE
        return deliver(memory, state, reach, plan.container)
    plan.container = None
    targets = candidate_targets(memory)
    if plan.target not in targets:
        plan.target = targets[int(rng.integers(len(targets)))] if targets else None
    if plan.target is None:
        return EXPLORE
    if in_reach(memory, plan.target, state, reach):
        return Action("pick_up", plan.target)
    return Action("walk_to", plan.target)


# -- greedy ------------------------------------------------------------------

def greedy_choice(memory: AgentMemory, state: PlannerState, task: TaskInfo,
                  costs: HeuristicCosts = HeuristicCosts(),
                  forecasts: Optional[dict[int, TargetForecast]] = None) -> Optional[int]:
    """Lowest-cost known target; ties go to the lower id."""
    best, best_cost = None, math.inf
    container = None if state.has_bag else nearest_container(memory, state)
    for oid in candidate_targets(memory, state.held):
        est = heuristic_cost(memory, state, RescuePlan(oid, container), task, costs, forecasts)
        if est.total < best_cost - 1e-9:
            best, best_cost = oid, est.total
    return best


def greedy_policy(observation: Observation, memory: AgentMemory, state: PlannerState, task: TaskInfo,
                  costs: HeuristicCosts = HeuristicCosts()) -> Action:
    if state.held is not None:
        return deliver(memory, state, costs.reach_radius)
    # greedy ranks by cost alone, so payoff forecasts are skipped
    blank = {oid: TargetForecast(oid, 0.0, math.inf, math.inf) for oid in memory.known_targets()}
    oid = greedy_choice(memory, state, task, costs, forecasts=blank)
    if oid is None:
        return EXPLORE
    if in_reach(memory, oid, state, costs.reach_radius):
        return Action("pick_up", oid)
    return Action("walk_to", oid)


# -- policy objects for the harness ------------------------------------------------

class Policy:
    """Stateful decision maker for one episode."""

    name = "policy"

    def reset(self, task: TaskInfo, agent: AgentState, seed: int) -> None:
        self.task = task
        self.costs = HeuristicCosts.from_agent(agent)
        self.rng = np.random.default_rng(seed)

    def decide(self, observation: Observation, memory: AgentMemory, state: PlannerState) -> Action:
        raise NotImplementedError

    def notify(self, action: Action, outcome: ActionOutcome) -> None:
        pass

    def spec(self) -> dict:
        """Constructor parameters, logged so a replay can rebuild the policy."""
        return {}


class RandomPolicy(Policy):
    name = "random"

    def decide(self, observation, memory, state):
        return random_policy(observation, memory, state, self.rng, self.costs.reach_radius)


class RulePolicy(Policy):
    name = "rule"

    def reset(self, task, agent, seed):
        super().reset(task, agent, seed)
        self.plan = RulePlan()

    def decide(self, observation, memory, state):
        return rule_policy(observation, memory, state, self.rng, self.plan, self.costs.reach_radius)

    def notify(self, action, outcome):
        if not outcome.ok and action.target is not None and action.target == self.plan.target:
            self.plan.target = None


class GreedyPolicy(Policy):
    name = "greedy"

    def decide(self, observation, memory, state):
        return greedy_policy(observation, memory, state, self.task, self.costs)
