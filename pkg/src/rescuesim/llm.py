"""Text prompt, completion parsing and the chat-completion decision maker.

The world state and observation memory are rendered into six fixed sections
and the decision is posed as a lettered multiple-choice question. Transport
or parse failures are retried; once retries run out the greedy choice is
taken and counted as a fallback.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import re
import string
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Protocol, Sequence, Union

import httpx

from .agent import DROP, EXPLORE, Action, Observation
from .baselines import (HeuristicCosts, PlannerState, Policy, candidate_targets, greedy_policy, in_reach)
from .memory import AgentMemory, TaskInfo

logger = logging.getLogger(__name__)

LABELS = string.ascii_uppercase
PREVIOUS_ACTIONS_SHOWN = 10

TASK_TEXT = {
    "fire": ("A fire has broken out indoors. Flames spread across the floor and heat nearby objects "
             "until they ignite; a burnt object keeps only half its value."),
    "flood": ("Water is flooding the room from one side and rising. Light objects float and drift with "
              "the current; a non-waterproof object that goes under keeps only half its value."),
    "wind": ("A strong wind is blowing outdoors and pushes light objects across the ground. Objects "
             "blown far outside the area are lost for good."),
}
SAFE_TEXT = {
    "fire": "Put each rescued object into the bag you carry.",
    "flood": "Put each rescued object into the bag you carry.",
    "wind": "Carry each rescued object to a shopping cart and drop it in.",
}


class ParseError(ValueError):
    """The completion does not name exactly one offered option."""


class TransportError(RuntimeError):
    """The chat endpoint could not produce a completion."""


@dataclass(frozen=True)
class Option:
    label: str
    text: str
    action: Action

    def render(self) -> str:
        return f"{self.label}. {self.text}"


@dataclass(frozen=True)
class PromptBundle:
    task_description: str
    target_information: str
    current_state: str
    observation_memory: str
    previous_actions: str
    available_actions: tuple[Option, ...]

    def __post_init__(self) -> None:
        if not self.available_actions:
            raise ValueError("a prompt needs at least one available action")

    SECTIONS = ("Task description", "Target objects", "Current state", "Observation memory",
                "Previous actions", "Available actions")

    @property
    def text(self) -> str:
        bodies = (self.task_description, self.target_information, self.current_state,
                  self.observation_memory, self.previous_actions,
                  "\n".join(o.render() for o in self.available_actions))
        parts = [f"## {title}\n{body}" for title, body in zip(self.SECTIONS, bodies)]
        parts.append("Think step by step, then finish with a line of the form 'Answer: <letter>'.")
        return "\n\n".join(parts) + "\n"


SYSTEM_PROMPT = "You are an embodied agent rescuing valuable objects during a disaster."


# -- prompt building -------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _hazard_text(task: str, hazard: Optional[float]) -> str:
    if hazard is None:
        return ""
    if task == "fire":
        return f", temperature {hazard:.1f} C"
    if task == "flood":
        return f", water level {hazard:.2f} m"
    return ""


def _name(memory: AgentMemory, oid: int) -> str:
    return f"{memory.info[oid].category} (id {oid})"


def available_options(memory: AgentMemory, state: PlannerState, task: TaskInfo,
                      reach: float = 1.0) -> tuple[Option, ...]:
    """Offered actions: object actions sorted by id, then drop, then explore; lettered in that order."""
    acts: list[tuple[str, Action]] = []
    if state.held is None:
        for oid in candidate_targets(memory):
            if in_reach(memory, oid, state, reach):
                acts.append((f"pick up {_name(memory, oid)}", Action("pick_up", oid)))
            else:
                acts.append((f"walk to {_name(memory, oid)}", Action("walk_to", oid)))
    else:
        if not state.has_bag:
            for c in memory.known_containers():
                if state.position.horizontal_distance(memory.latest(c).position) > reach * 0.95:
                    acts.append((f"walk to {_name(memory, c)}", Action("walk_to", c)))
        held = _name(memory, state.held) if state.held in memory.info else f"object {state.held}"
        if state.has_bag:
            acts.append((f"drop {held} into the bag", DROP))
        elif any(state.position.horizontal_distance(memory.latest(c).position) <= reach * 0.95
                 for c in memory.known_containers()):
            acts.append((f"drop {held} into the cart", DROP))
    acts.append(("explore (look around)", EXPLORE))
    if len(acts) > len(LABELS):
        raise ValueError(f"too many options ({len(acts)}) for single-letter labels")
    return tuple(Option(LABELS[k], text, a) for k, (text, a) in enumerate(acts))


def build_prompt(observation: Observation, memory: AgentMemory, task: TaskInfo, state: PlannerState,
                 reach: float = 1.0, options: Optional[Sequence[Option]] = None) -> PromptBundle:
    """Render the decision point as a six-section prompt; byte-stable for equal inputs."""
    desc = (f"{TASK_TEXT[task.task]} {SAFE_TEXT[task.task]} Rescue as much target value as possible "
            f"within {task.frame_limit} frames. The sections below list the target categories, what "
            f"you see now, what you saw before, your previous actions and the actions you may take.")

    lines = []
    for name, cat in task.target_categories.items():
        extra = ""
        if task.task == "fire":
            extra = f", ignition point {cat.ignition_point:.1f} C"
        elif task.task == "flood":
            extra = ", waterproof" if cat.waterproof else ", not waterproof"
        lines.append(f"- {name}: value {cat.value:g}{extra}")
    targets = "\n".join(lines) if lines else "(none)"

    held = "[]" if state.held is None else f"[{_name(memory, state.held)}]" if state.held in memory.info \
        else f"[object {state.held}]"
    cur = [f"Frame {state.frame} of {task.frame_limit}. Position ({_fmt(state.position.x)}, "
           f"{_fmt(state.position.z)}), heading {state.heading:.0f} deg.",
           f"Held objects: {held}",
           "Target objects currently seen:"]
    seen_now = set()
    for v in observation.visible:
        if not v.is_target or v.id in memory.rescued or v.id == state.held:
            continue
        seen_now.add(v.id)
        hz = v.temperature if v.temperature is not None else v.water_level
        cur.append(f"- {v.category} (id {v.id}): value {v.value:g}, distance {v.distance:.2f} m, "
                   f"status {v.status}{_hazard_text(task.task, hz)}")
    if not seen_now:
        cur.append("- none")
    if task.task == "wind":
        cur.append("Containers known:")
        cs = memory.known_containers()
        for c in cs:
            p = memory.latest(c).position
            cur.append(f"- {_name(memory, c)} at ({_fmt(p.x)}, {_fmt(p.z)}), distance "
                       f"{state.position.horizontal_distance(p):.2f} m")
        if not cs:
            cur.append("- none")
    current = "\n".join(cur)

    mem = ["Target objects previously seen:"]
    before = [oid for oid in memory.known_targets() if oid not in seen_now and oid != state.held]
    for oid in before:
        last = memory.latest(oid)
        mem.append(f"- {_name(memory, oid)}: last seen frame {last.frame}, value {last.value:g}, distance "
                   f"{state.position.horizontal_distance(last.position):.2f} m, status "
                   f"{last.status}{_hazard_text(task.task, last.hazard)}")
    if not before:
        mem.append("- none")
    mem.append("Objects states history:")
    hist_ids = [oid for oid in sorted(memory.history)
                if memory.info[oid].is_target and oid not in memory.rescued and oid not in memory.missing]
    for oid in hist_ids:
        snaps = "; ".join(f"frame {s.frame}: at ({_fmt(s.position.x)}, {_fmt(s.position.z)}), {s.status}"
                          f"{_hazard_text(task.task, s.hazard)}" for s in memory.history[oid])
        mem.append(f"- {_name(memory, oid)}: {snaps}")
    if not hist_ids:
        mem.append("- none")
    memory_text = "\n".join(mem)

    recent = memory.actions[-PREVIOUS_ACTIONS_SHOWN:]
    previous = "\n".join(f"- {a}" for a in recent) if recent else "- none"

    opts = tuple(options) if options is not None else available_options(memory, state, task, reach)
    return PromptBundle(desc, targets, current, memory_text, previous, opts)


# -- parsing -----------------------------------------------------------------------

# a capital letter standing alone or followed by '.', ')' or ':'
_LABEL_RE = re.compile(r"^[\s*(\[]*([A-Z])(?:[.):\]]|\s*$)")


def _normalize(text: str) -> str:
    text = text.lower()
    text = re.sub(r"[^a-z0-9 ]+", " ", text)
    return " ".join(text.split())


def parse_decision(completion: str, options: Sequence[Option]) -> Option:
    """Pick the offered option named after the final reasoning.

    The answer is the text after the last ``Answer:`` marker, or the last
    non-empty line when there is none. A leading option label wins; otherwise
    an option's text must appear verbatim, then after case and punctuation
    normalization. Several matches resolve to the longest option text.
    """
    if not options:
        raise ParseError("no options offered")
    idx = completion.lower().rfind("answer:")
    if idx >= 0:
        tail = completion[idx + len("answer:"):].strip()
    else:
        lines = [ln.strip() for ln in completion.strip().splitlines() if ln.strip()]
        tail = lines[-1] if lines else ""
    if not tail:
        raise ParseError("empty answer")
    by_label = {o.label: o for o in options}
    m = _LABEL_RE.match(tail)
    if m is not None:
        label = m.group(1)
        if label not in by_label:
            raise ParseError(f"option {label} is out of range")
        return by_label[label]
    exact = [o for o in options if o.text in tail]
    if exact:
        return max(exact, key=lambda o: (len(o.text), -options.index(o)))
    norm = _normalize(tail)
    fuzzy = [o for o in options if _normalize(o.text) in norm]
    if fuzzy:
        return max(fuzzy, key=lambda o: (len(o.text), -options.index(o)))
    raise ParseError(f"no offered option matches {tail[:80]!r}")


# -- chat transport ----------------------------------------------------------------

@dataclass(frozen=True)
class LlmConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4"
    max_tokens: int = 512
    temperature: float = 0.7
    top_p: float = 1.0
    api_key_env: str = "OPENAI_API_KEY"
    retry_limit: int = 3
    timeout: float = 60.0
    backoff: float = 1.0  # seconds, doubled per retry after a transport error

    def __post_init__(self) -> None:
        if self.retry_limit < 1:
            raise ValueError("retry_limit must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")

    def request_body(self, system: str, user: str) -> dict[str, Any]:
        return {"model": self.model,
                "messages": [{"role": "system", "content": system}, {"role": "user", "content": user}],
                "max_tokens": self.max_tokens, "temperature": self.temperature, "top_p": self.top_p}


class ChatClient(Protocol):
    def complete(self, system: str, user: str) -> str: ...


class HttpChatClient:
    """Single-turn chat completions over HTTP; the API key comes from the configured variable."""

    def __init__(self, config: LlmConfig, client: Optional[httpx.Client] = None):
        self.config = config
        self.client = client if client is not None else httpx.Client(timeout=config.timeout)

    def complete(self, system: str, user: str) -> str:
        cfg = self.config
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self.client.post(cfg.endpoint, json=cfg.request_body(system, user), headers=headers,
                                    timeout=cfg.timeout)
        except httpx.HTTPError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed response: {exc}") from exc


Reply = Union[str, BaseException]


class MockChat:
    """Offline stand-in: scripted replies by query index, or a responder function.

    A scripted entry that is an exception instance is raised instead of
    returned. Past the end of the script the responder (if any) answers.
    """

    def __init__(self, replies: Sequence[Reply] = (), responder: Optional[Callable[[str, str], str]] = None):
        self.replies = list(replies)
        self.responder = responder
        self.calls = 0
        self.prompts: list[str] = []

    def complete(self, system: str, user: str) -> str:
        k = self.calls
        self.calls += 1
        self.prompts.append(user)
        if k < len(self.replies):
            r = self.replies[k]
            if isinstance(r, BaseException):
                raise r
            return r
        if self.responder is not None:
            return self.responder(system, user)
        raise TransportError("mock script exhausted")


# -- the policy --------------------------------------------------------------------

@dataclass
class LlmDecision:
    option: Optional[Option]
    attempts: int
    fallback: bool
    errors: list[str] = field(default_factory=list)


class LlmPolicy(Policy):
    """Asks the chat model to choose among the offered options, falling back to greedy."""

    name = "llm"

    def __init__(self, client: ChatClient, config: LlmConfig = LlmConfig(),
                 sleep: Callable[[float], None] = time.sleep):
        self.client = client
        self.config = config
        self.sleep = sleep
        self.log = None
        self.fallback_count = 0
        self.decisions = 0
        self.last_bundle: Optional[PromptBundle] = None
        self.last_context: Optional[tuple[Observation, AgentMemory, PlannerState]] = None

    def spec(self):
        return dataclasses.asdict(self.config)

    def attach_log(self, log) -> None:
        self.log = log

    def reset(self, task, agent, seed):
        super().reset(task, agent, seed)
        self.fallback_count = 0
        self.decisions = 0

    def decide(self, observation: Observation, memory: AgentMemory, state: PlannerState) -> Action:
        self.decisions += 1
        bundle = build_prompt(observation, memory, self.task, state, self.costs.reach_radius)
        self.last_bundle = bundle
        self.last_context = (observation, memory, state)
        prompt = bundle.text
        errors: list[str] = []
        for attempt in range(1, self.config.retry_limit + 1):
            completion, error, choice = None, None, None
            try:
                completion = self.client.complete(SYSTEM_PROMPT, prompt)
                choice = parse_decision(completion, bundle.available_actions)
            except ParseError as exc:
                error = f"parse: {exc}"
            except (TransportError, httpx.HTTPError, TimeoutError, OSError) as exc:
                error = f"transport: {type(exc).__name__}: {exc}"
            self._record(state.frame, attempt, prompt if attempt == 1 else None, completion, error, choice)
            if choice is not None:
                return choice.action
            errors.append(error or "")
            logger.info("llm decision %d attempt %d failed: %s", self.decisions, attempt, error)
            if error and error.startswith("transport") and attempt < self.config.retry_limit:
                self.sleep(self.config.backoff * 2 ** (attempt - 1))
        self.fallback_count += 1
        action = greedy_policy(observation, memory, state, self.task, self.costs)
        self._record(state.frame, None, None, None, "fallback to greedy", None, fallback=action.describe())
        return action

    def _record(self, frame, attempt, prompt, completion, error, choice, fallback=None) -> None:
        if self.log is None:
            return
        rec: dict[str, Any] = {"decision": self.decisions, "frame": frame, "attempt": attempt}
        if prompt is not None:
            rec["prompt"] = prompt
        if completion is not None:
            rec["completion"] = completion
        if error is not None:
            rec["error"] = error
        if choice is not None:
            rec["choice"] = choice.label
            rec["action"] = choice.action.describe()
        if fallback is not None:
            rec["fallback"] = fallback
        self.log.llm_exchange(rec)


def greedy_responder(policy: LlmPolicy, costs: Optional[HeuristicCosts] = None) -> Callable[[str, str], str]:
    """Mock answer function that always names the option matching the greedy agent's choice."""

    def respond(system: str, user: str) -> str:
        bundle = policy.last_bundle
        observation, memory, state = policy.last_context
        want = greedy_policy(observation, memory, state, policy.task, costs or policy.costs)
        for o in bundle.available_actions:
            if o.action == want:
                return f"The greedy choice is the cheapest rescue.\nAnswer: {o.label}"
        return "I am not sure.\nAnswer: none of these"

    return respond
