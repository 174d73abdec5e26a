"""Episode orchestration, logging, metrics, aggregation and replay checks."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

from . import rng as rngmod
from .agent import Action, ActionError, ActionOutcome, AgentState, Executor, RescueRecord, execute, observe
from .baselines import GreedyPolicy, PlannerState, Policy, RandomPolicy, RulePolicy
from .llm import LlmConfig, LlmPolicy, MockChat, TransportError
from .mcts import MctsParams, MctsPolicy
from .memory import AgentMemory, TaskInfo, memory_update
from .physics import FrameEvents, HazardConfig, PhysicsParams, World
from .world import Scene, scene_from_dict

logger = logging.getLogger(__name__)

FRAME_LIMITS = {"fire": 1500, "flood": 1500, "wind": 3000}
METRIC_HEADERS = ("Value", "Step", "Damage")
ARROWS = {"Value": "↑", "Step": "↓", "Damage": "↓"}


def default_frame_limit(task: str) -> int:
    return FRAME_LIMITS[task]


@dataclass
class EpisodeResult:
    scene_id: str
    agent: str
    task: str
    seed: int
    frame_limit: int
    frames_used: int = 0
    rescues: list[RescueRecord] = field(default_factory=list)
    # initial value of every target in the scene, the Value denominator
    target_values: dict[int, float] = field(default_factory=dict)
    decisions: int = 0
    fallback_count: int = 0
    failed: bool = False
    error: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "scene_id": self.scene_id, "agent": self.agent, "task": self.task, "seed": self.seed,
            "frame_limit": self.frame_limit, "frames_used": self.frames_used,
            "rescues": [r.to_dict() for r in self.rescues],
            "target_values": {str(k): v for k, v in sorted(self.target_values.items())},
            "decisions": self.decisions, "fallback_count": self.fallback_count,
            "failed": self.failed, "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EpisodeResult":
        return cls(
            scene_id=d["scene_id"], agent=d["agent"], task=d["task"], seed=int(d["seed"]),
            frame_limit=int(d["frame_limit"]), frames_used=int(d["frames_used"]),
            rescues=[RescueRecord(int(r["object_id"]), int(r["frame"]), bool(r["damaged"]), float(r["value"]))
                     for r in d["rescues"]],
            target_values={int(k): float(v) for k, v in d["target_values"].items()},
            decisions=int(d.get("decisions", 0)), fallback_count=int(d.get("fallback_count", 0)),
            failed=bool(d.get("failed", False)), error=str(d.get("error", "")),
        )


def _digest(snapshot: dict[str, Any]) -> str:
    text = json.dumps(snapshot, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(text.encode(), digest_size=8).hexdigest()


class EpisodeLog:
    """In-memory JSONL streams for one episode; written out by ``save``."""

    def __init__(self) -> None:
        self.episode: list[str] = []
        self.actions: list[str] = []
        self.llm: list[str] = []

    @staticmethod
    def _line(record: dict[str, Any]) -> str:
        return json.dumps(record, sort_keys=True, separators=(",", ":"))

    def header(self, record: dict[str, Any]) -> None:
        self.episode.append(self._line({"header": record}))

    def frame(self, world: World, events: FrameEvents, agent: AgentState) -> None:
        rec = events.to_record()
        rec["agent"] = [agent.position.x, agent.position.z, agent.heading, agent.held]
        rec["state"] = _digest(world.snapshot())
        self.episode.append(self._line(rec))

    def action(self, record: dict[str, Any]) -> None:
        self.actions.append(self._line(record))

    def llm_exchange(self, record: dict[str, Any]) -> None:
        self.llm.append(self._line(record))

    def save(self, directory: str | os.PathLike) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name, lines in (("episode.log", self.episode), ("actions.log", self.actions), ("llm.log", self.llm)):
            (d / name).write_text("".join(line + "\n" for line in lines))


def episode_seeds(scene: Scene, seed: int) -> tuple[int, int]:
    """(world seed, policy seed) for an episode."""
    return rngmod.derive_seed(scene.seed, "world", seed), rngmod.derive_seed(scene.seed, "policy", seed)


def _remaining_targets(world: World) -> int:
    return sum(1 for o in world.objects if o.is_target and not o.rescued and not o.lost)


def run_episode(scene: Scene, policy: Policy, *, scene_id: str = "scene", seed: int = 0,
                frame_limit: Optional[int] = None, hazards: HazardConfig = HazardConfig(),
                physics: PhysicsParams = PhysicsParams(), log: Optional[EpisodeLog] = None,
                memory_size: int = 5) -> EpisodeResult:
    """Observe, remember, decide, execute until the budget is spent or nothing is left to rescue."""
    limit = default_frame_limit(scene.task) if frame_limit is None else frame_limit
    world_seed, policy_seed = episode_seeds(scene, seed)
    world = World(scene, hazards, physics, seed=world_seed)
    agent = AgentState.spawn(world)
    result = EpisodeResult(scene_id, getattr(policy, "name", type(policy).__name__), scene.task, seed, limit,
                           target_values={o.id: float(o.category.value) for o in scene.targets})
    if log is not None:
        spec = policy.spec() if hasattr(policy, "spec") else {}
        log.header({"scene_id": scene_id, "agent": result.agent, "agent_params": spec, "task": scene.task,
                    "seed": seed, "frame_limit": limit, "world_seed": world_seed, "policy_seed": policy_seed,
                    "hazards": hazards.to_dict(), "physics": dataclasses.asdict(physics),
                    "memory_size": memory_size, "scene": scene.to_dict()})
        on_frame: Optional[Callable[[FrameEvents], None]] = lambda ev: log.frame(world, ev, agent)
    else:
        on_frame = None
    ex = Executor(world, agent, limit, on_frame)
    memory = AgentMemory(max_history=memory_size)
    task = TaskInfo.from_scene(scene, limit, hazards.fire, hazards.wind.out_of_bounds_margin)
    if hasattr(policy, "attach_log"):
        policy.attach_log(log)
    policy.reset(task, agent, policy_seed)
    obs = observe(world, agent)
    memory_update(memory, obs, agent, world.static_grid)
    try:
        while not ex.out_of_time and _remaining_targets(world) > 0:
            state = PlannerState.of(agent, world.frame)
            action = policy.decide(obs, memory, state)
            start = world.frame
            try:
                outcome = execute(ex, action)
            except ActionError as exc:
                # a malformed request still costs a frame so the loop always advances
                outcome = ex._fail_fast(f"invalid action: {exc}")
            for o in outcome.observations:
                memory_update(memory, o, agent, world.static_grid)
            obs = observe(world, agent)
            memory_update(memory, obs, agent, world.static_grid)
            learn_from_outcome(memory, action, outcome)
            policy.notify(action, outcome)
            result.decisions += 1
            if log is not None:
                log.action({"decision": result.decisions, "frame": start, "action": action.describe(),
                            "status": outcome.status, "frames": outcome.frames_consumed,
                            "reason": outcome.reason, "rescues": [r.to_dict() for r in outcome.rescues]})
    except Exception as exc:  # agent crash: record and let the run continue
        result.failed = True
        result.error = f"{type(exc).__name__}: {exc}"
        logger.warning("episode %s failed: %s", scene_id, result.error)
    result.frames_used = world.frame
    result.rescues = list(ex.rescues)
    result.fallback_count = getattr(policy, "fallback_count", 0)
    return result


def learn_from_outcome(memory: AgentMemory, action: Action, outcome: ActionOutcome) -> None:
    for r in outcome.rescues:
        memory.rescued.add(r.object_id)
    memory.actions.append(f"{action.describe()} -> {outcome.status}")
    if outcome.status == "failure" and action.target is not None:
        memory.failures[action.target] = memory.failures.get(action.target, 0) + 1
        if outcome.reason in ("target lost", "target unavailable", "object unavailable"):
            memory.missing.add(action.target)


# -- metrics -----------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    value: float
    step: Optional[float]
    damage: Optional[float]
    episodes: int = 1

    def to_dict(self) -> dict[str, Any]:
        return {"Value": self.value, "Step": self.step, "Damage": self.damage, "episodes": self.episodes}


def episode_metrics(r: EpisodeResult) -> Metrics:
    total = sum(r.target_values.values())
    gained = sum(x.value for x in r.rescues)
    value = 100.0 * gained / total if total > 0 else 0.0
    if not r.rescues:
        return Metrics(value, None, None)
    step = r.frames_used / len(r.rescues)
    damage = 100.0 * sum(1 for x in r.rescues if x.damaged) / len(r.rescues)
    return Metrics(value, step, damage)


def compute_metrics(results: Iterable[EpisodeResult]) -> Metrics:
    """Per-scene Value/Step/Damage, then means; Step and Damage skip zero-rescue scenes."""
    per = [episode_metrics(r) for r in results]
    if not per:
        raise ValueError("compute_metrics needs at least one episode result")
    value = math.fsum(m.value for m in per) / len(per)
    steps = [m.step for m in per if m.step is not None]
    damages = [m.damage for m in per if m.damage is not None]
    return Metrics(value,
                   math.fsum(steps) / len(steps) if steps else None,
                   math.fsum(damages) / len(damages) if damages else None,
                   len(per))


# -- run directories, aggregation, reports --------------------------------------------

def episode_dir(out: str | os.PathLike, task: str, agent: str, scene_id: str) -> Path:
    return Path(out) / task / agent / scene_id


def save_result(result: EpisodeResult, directory: str | os.PathLike) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "result.json").write_text(json.dumps(result.to_dict(), sort_keys=True, indent=2) + "\n")


def load_results(run_dir: str | os.PathLike) -> list[EpisodeResult]:
    out = []
    for p in sorted(Path(run_dir).glob("*/*/*/result.json")):
        with open(p) as f:
            out.append(EpisodeResult.from_dict(json.load(f)))
    return out


@dataclass
class ResultsTable:
    # rows keyed (agent, task)
    rows: dict[tuple[str, str], Metrics] = field(default_factory=dict)

    @property
    def tasks(self) -> list[str]:
        order = {"fire": 0, "flood": 1, "wind": 2}
        return sorted({t for _, t in self.rows}, key=lambda t: (order.get(t, 9), t))

    @property
    def agents(self) -> list[str]:
        return sorted({a for a, _ in self.rows})


def aggregate(run_dir: str | os.PathLike, split_scenes: Optional[set[str]] = None) -> ResultsTable:
    """Per-agent per-task means over the episodes in a run directory."""
    results = load_results(run_dir)
    if split_scenes is not None:
        results = [r for r in results if r.scene_id in split_scenes]
    if not results:
        raise ValueError(f"no completed episodes under {run_dir}")
    return aggregate_results(results)


def aggregate_results(results: Iterable[EpisodeResult]) -> ResultsTable:
    groups: dict[tuple[str, str], list[EpisodeResult]] = {}
    for r in results:
        groups.setdefault((r.agent, r.task), []).append(r)
    return ResultsTable({k: compute_metrics(v) for k, v in sorted(groups.items())})


def _columns(tasks: list[str]) -> list[tuple[str, str]]:
    cols = []
    for t in tasks:
        for m in METRIC_HEADERS:
            if m == "Damage" and t == "wind":
                continue
            cols.append((t, m))
    return cols


def _fmt(v: Optional[float]) -> str:
    return "-" if v is None else f"{v:.1f}"


def _cell(table: ResultsTable, agent: str, task: str, metric: str) -> str:
    m = table.rows.get((agent, task))
    if m is None:
        return "-"
    return _fmt({"Value": m.value, "Step": m.step, "Damage": m.damage}[metric])


def render_csv(table: ResultsTable) -> str:
    cols = _columns(table.tasks)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["agent"] + [f"{t}_{m}" for t, m in cols])
    for a in table.agents:
        w.writerow([a] + [_cell(table, a, t, m) for t, m in cols])
    return buf.getvalue()


def render_text(table: ResultsTable) -> str:
    cols = _columns(table.tasks)
    head = ["Agent"] + [f"{t} {m}{ARROWS[m]}" for t, m in cols]
    rows = [[a] + [_cell(table, a, t, m) for t, m in cols] for a in table.agents]
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
    lines = ["  ".join(c.ljust(widths[i]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(r))
             for r in [head] + rows]
    return "\n".join(lines) + "\n"


def emit_report(table: ResultsTable, out_dir: str | os.PathLike, stem: str = "results") -> tuple[Path, Path]:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    csv_path, txt_path = d / f"{stem}.csv", d / f"{stem}.txt"
    csv_path.write_text(render_csv(table))
    txt_path.write_text(render_text(table))
    return csv_path, txt_path


# -- replay ------------------------------------------------------------------------

@dataclass
class ReplayReport:
    ok: bool
    divergent_frame: Optional[int] = None
    detail: str = ""


def read_jsonl(path: str | os.PathLike) -> list[str]:
    with open(path) as f:
        return [line.rstrip("\n") for line in f if line.strip()]


def compare_logs(logged: list[str], replayed: list[str]) -> ReplayReport:
    """First divergence between a logged episode and its re-execution.

    The frame number is read from the replayed line when possible, since the
    logged one may be the tampered value.
    """
    for k in range(max(len(logged), len(replayed))):
        a = logged[k] if k < len(logged) else None
        b = replayed[k] if k < len(replayed) else None
        if a == b:
            continue
        frame = None
        for line in (b, a):
            if line is None:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue
            if isinstance(rec, dict) and isinstance(rec.get("frame"), int):
                frame = rec["frame"]
                break
        if frame is None and k > 0:
            frame = k - 1
        where = f"frame {frame}" if frame is not None else "header"
        return ReplayReport(False, frame, f"logs diverge at line {k + 1} ({where})")
    return ReplayReport(True)


AGENTS = ("random", "rule", "greedy", "mcts", "llm")


def make_policy(name: str, params: Optional[dict[str, Any]] = None, chat=None) -> Policy:
    """Build a policy by agent name; ``chat`` is the completion client for ``llm``."""
    params = dict(params or {})
    if name == "random":
        return RandomPolicy()
    if name == "rule":
        return RulePolicy()
    if name == "greedy":
        return GreedyPolicy()
    if name == "mcts":
        return MctsPolicy(MctsParams(**params))
    if name == "llm":
        if chat is None:
            raise ValueError("the llm agent needs a chat client")
        return LlmPolicy(chat, LlmConfig(**params))
    raise ValueError(f"unknown agent {name!r}; expected one of {', '.join(AGENTS)}")


def _recorded_error(text: str) -> Exception:
    """Rebuild a logged transport failure so its replayed log line reads the same."""
    parts = text.split(": ", 2)
    if len(parts) == 3 and parts[0] == "transport" and parts[1].isidentifier():
        return type(parts[1], (TransportError,), {})(parts[2])
    return TransportError(text or "recorded failure")


def recorded_chat(llm_lines: list[str]):
    """A mock client that replays the completions (and transport errors) of an llm.log."""
    replies: list[Any] = []
    for line in llm_lines:
        rec = json.loads(line)
        if rec.get("attempt") is None:
            continue
        if "completion" in rec:
            replies.append(rec["completion"])
        else:
            replies.append(_recorded_error(rec.get("error", "")))
    return MockChat(replies)


def replay(directory: str | os.PathLike) -> ReplayReport:
    """Re-run a logged episode from its header and compare episode, action and LLM logs line by line."""
    d = Path(directory)
    logged = read_jsonl(d / "episode.log")
    if not logged:
        return ReplayReport(False, None, "empty episode log")
    try:
        head = json.loads(logged[0])["header"]
        scene = scene_from_dict(head["scene"])
        chat = None
        if head["agent"] == "llm":
            llm_path = d / "llm.log"
            chat = recorded_chat(read_jsonl(llm_path) if llm_path.exists() else [])
        policy = make_policy(head["agent"], head.get("agent_params"), chat)
        hazards = HazardConfig.from_dict(head["hazards"])
        physics = PhysicsParams(**head["physics"])
    except (KeyError, TypeError, ValueError) as exc:
        return ReplayReport(False, None, f"unreadable header: {exc}")
    log = EpisodeLog()
    run_episode(scene, policy, scene_id=head["scene_id"], seed=int(head["seed"]),
                frame_limit=int(head["frame_limit"]), hazards=hazards, physics=physics, log=log,
                memory_size=int(head.get("memory_size", 5)))
    streams = [("episode.log", logged, log.episode), ("actions.log", None, log.actions), ("llm.log", None, log.llm)]
    for name, recorded, replayed in streams:
        if recorded is None:
            path = d / name
            recorded = read_jsonl(path) if path.exists() else []
        report = compare_logs(recorded, replayed)
        if not report.ok:
            return ReplayReport(False, report.divergent_frame, f"{name}: {report.detail}")
    return ReplayReport(True)
