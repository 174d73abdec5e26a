"""Monte Carlo tree search over rescue orderings with a deterministic internal model.

The model advances time by heuristic plan costs and scores each rescue by its
forecast value, normalized by the total known target value and discounted per
frame. Because the model is deterministic, every node's greedy rollout is
computed once and cached.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .agent import EXPLORE, Action, Observation
from .baselines import (HeuristicCosts, PlannerState, Policy, RescuePlan, candidate_targets, deliver,
                        heuristic_cost, in_reach)
from .forecast import TargetForecast, forecast_targets
from .memory import AgentMemory, TaskInfo
from .vec import Vec3


@dataclass(frozen=True)
class MctsParams:
    c0: float = 1e6
    c1: float = 0.1
    simulations: int = 2000
    rollout_depth: int = 10
    discount: float = 0.999  # per frame

    def __post_init__(self) -> None:
        if self.simulations < 1:
            raise ValueError("simulations must be >= 1")
        if self.c0 <= 0:
            raise ValueError("c0 must be > 0")


def exploration_weight(x: float, c0: float = 1e6, c1: float = 0.1) -> float:
    """c(x) = log((1 + x + c0) / c0) + c1."""
    return math.log((1.0 + x + c0) / c0) + c1


def q_mct(q: float, n_parent: int, n_child: int, params: MctsParams) -> float:
    """Q(s, a) + c(n(s)) * sqrt(n(s)) / (1 + n(s, a))."""
    return q + exploration_weight(n_parent, params.c0, params.c1) * math.sqrt(n_parent) / (1 + n_child)


@dataclass
class _Node:
    state: PlannerState
    remaining: tuple[int, ...]
    reward: float = 0.0  # reward collected on the edge into this node
    terminal: bool = False
    children: dict[int, "_Node"] = field(default_factory=dict)
    untried: list[int] = field(default_factory=list)
    visits: int = 0
    total: float = 0.0
    rollout: Optional[float] = None

    @property
    def q(self) -> float:
        return self.total / self.visits if self.visits else 0.0


class _Model:
    def __init__(self, memory: AgentMemory, task: TaskInfo, costs: HeuristicCosts, params: MctsParams,
                 forecasts: dict[int, TargetForecast], norm: float, root_frame: int):
        self.memory = memory
        self.task = task
        self.costs = costs
        self.params = params
        self.forecasts = forecasts
        self.norm = norm
        self.root_frame = root_frame
        self.containers = memory.known_containers()

    def _container_for(self, oid: int, state: PlannerState) -> Optional[int]:
        if state.has_bag or not self.containers:
            return None
        p = self.memory.predict_position(oid, state.frame)
        return min(self.containers, key=lambda c: (p.horizontal_distance(self.memory.latest(c).position), c))

    def step(self, node: _Node, oid: int) -> _Node:
        s = node.state
        est = heuristic_cost(self.memory, s, RescuePlan(oid, self._container_for(oid, s)), self.task,
                             self.costs, self.forecasts)
        finish = est.finish_frame
        remaining = tuple(t for t in node.remaining if t != oid)
        if finish > self.task.frame_limit:
            return _Node(s, remaining, 0.0, True)
        reward = est.expected_value / self.norm * self.params.discount ** (finish - self.root_frame)
        nxt = PlannerState(est.end_position, est.end_heading, int(math.ceil(finish)), None, s.has_bag)
        return _Node(nxt, remaining, reward, not remaining)

    def greedy_pick(self, node: _Node) -> int:
        best, best_cost = node.remaining[0], math.inf
        for oid in node.remaining:
            c = heuristic_cost(self.memory, node.state, RescuePlan(oid, self._container_for(oid, node.state)),
                               self.task, self.costs, self.forecasts).total
            if c < best_cost - 1e-9:
                best, best_cost = oid, c
        return best

    def rollout(self, node: _Node) -> float:
        if node.rollout is None:
            total, cur = 0.0, node
            for _ in range(self.params.rollout_depth):
                if cur.terminal or not cur.remaining:
                    break
                cur = self.step(cur, self.greedy_pick(cur))
                total += cur.reward
            node.rollout = total
        return node.rollout


def _select_child(node: _Node, params: MctsParams) -> tuple[int, _Node]:
    best_key, best = None, None
    for oid in sorted(node.children):
        child = node.children[oid]
        key = q_mct(child.q, node.visits, child.visits, params)
        if best_key is None or key > best_key + 1e-15:
            best_key, best = key, (oid, child)
    assert best is not None
    return best


def mcts_search(memory: AgentMemory, state: PlannerState, task: TaskInfo, params: MctsParams,
                rng: np.random.Generator, costs: HeuristicCosts = HeuristicCosts(),
                candidates: Optional[list[int]] = None) -> tuple[int, dict[int, tuple[int, float]]]:
    """Best first rescue target and per-child (visits, Q) statistics at the root."""
    cands = candidate_targets(memory, state.held) if candidates is None else candidates
    if not cands:
        raise ValueError("mcts_search needs at least one candidate target")
    forecasts = forecast_targets(memory, task, state.frame, cands)
    norm = sum(fc.value for fc in forecasts.values()) or 1.0
    model = _Model(memory, task, costs, params, forecasts, norm, state.frame)
    root = _Node(state, tuple(cands))
    root.untried = list(cands)
    for _ in range(params.simulations):
        node, path = root, [root]
        # selection
        while not node.terminal and not node.untried and node.children:
            _, node = _select_child(node, params)
            path.append(node)
        # expansion
        if not node.terminal and node.untried:
            oid = node.untried.pop(int(rng.integers(len(node.untried))))
            child = model.step(node, oid)
            child.untried = list(child.remaining) if not child.terminal else []
            node.children[oid] = child
            node = child
            path.append(node)
        value = model.rollout(node) if not node.terminal else 0.0
        # backpropagation: each node's return counts rewards from its own edge on
        for n in reversed(path):
            value += n.reward
            n.visits += 1
            n.total += value
    stats = {oid: (c.visits, c.q) for oid, c in root.children.items()}
    best = max(stats, key=lambda oid: (stats[oid][0], stats[oid][1], -oid))
    return best, stats


def mcts_decide(observation: Observation, memory: AgentMemory, state: PlannerState, task: TaskInfo,
                params: MctsParams, rng: np.random.Generator,
                costs: HeuristicCosts = HeuristicCosts()) -> Action:
    """First primitive action of the best plan found by search."""
    if state.held is not None:
        return deliver(memory, state, costs.reach_radius)
    cands = candidate_targets(memory)
    if not cands:
        return EXPLORE
    if len(cands) == 1:
        oid = cands[0]
    else:
        oid, _ = mcts_search(memory, state, task, params, rng, costs, cands)
    if in_reach(memory, oid, state, costs.reach_radius):
        return Action("pick_up", oid)
    return Action("walk_to", oid)


class MctsPolicy(Policy):
    name = "mcts"

    def __init__(self, params: MctsParams = MctsParams()):
        self.params = params

    def spec(self):
        return dataclasses.asdict(self.params)

    def decide(self, observation, memory, state):
        return mcts_decide(observation, memory, state, self.task, self.params, self.rng, self.costs)
