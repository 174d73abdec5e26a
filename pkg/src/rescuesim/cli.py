"""Command line: gen, run, eval, compare, oracle, replay.

Exit status is 0 on success, 1 for usage errors and 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from .harness import (AGENTS, EpisodeLog, aggregate, aggregate_results, default_frame_limit, emit_report,
                      episode_dir, make_policy, render_text, replay, run_episode, save_result)
from .llm import HttpChatClient, LlmConfig, LlmPolicy, MockChat, greedy_responder
from .oracle import write_demonstrations
from .physics import PhysicsParams
from .procgen import GenConfig, builtin_templates, generate_dataset, load_manifest
from .world import load_scene

logger = logging.getLogger("rescuesim")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
TASKS = ("fire", "flood", "wind")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Settings for ``run``/``compare``; any field can come from a JSON file and be overridden by flags."""

    task: str = "fire"
    dataset: str = "data"  # directory holding manifest.json
    agent: str = "greedy"
    agent_params: dict[str, Any] = field(default_factory=dict)
    llm: dict[str, Any] = field(default_factory=dict)  # LlmConfig fields
    llm_mock: Optional[str] = None  # "greedy" answers offline by mirroring the greedy agent
    seeds: list[int] = field(default_factory=lambda: [0])
    frame_limit: Optional[int] = None
    agent_effects: bool = False
    split: str = "test"  # test, train or all
    max_scenes: Optional[int] = None
    out: str = "runs"

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise UsageError(f"unknown task {self.task!r}")
        if self.agent not in AGENTS:
            raise UsageError(f"unknown agent {self.agent!r}")
        if self.split not in ("test", "train", "all"):
            raise UsageError(f"unknown split {self.split!r}")
        if self.frame_limit is not None and self.frame_limit < 1:
            raise UsageError("frame limit must be >= 1")

    @property
    def limit(self) -> int:
        return default_frame_limit(self.task) if self.frame_limit is None else self.frame_limit

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path) as f:
            data = json.load(f)
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - known
        if extra:
            raise UsageError(f"{path}: unknown config keys {sorted(extra)}")
        return cls(**data)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _run_flags(p: argparse.ArgumentParser, multi_agent: bool = False) -> None:
    p.add_argument("--config", help="JSON RunConfig file; flags override its values")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--dataset", help="dataset directory with manifest.json")
    if multi_agent:
        p.add_argument("--agents", help="comma-separated agent names")
    else:
        p.add_argument("--agent", choices=AGENTS)
    p.add_argument("--seed", type=int, action="append", dest="seeds", help="episode seed (repeatable)")
    p.add_argument("--limit", type=int, dest="frame_limit", help="frame limit per episode")
    p.add_argument("--agent-effects", action="store_true", default=None,
                   help="let hazards slow or block the agent")
    p.add_argument("--split", choices=("test", "train", "all"))
    p.add_argument("--max-scenes", type=int)
    p.add_argument("--simulations", type=int, help="MCTS simulations per decision")
    p.add_argument("--llm-mock", choices=("greedy",), help="answer LLM queries offline")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rescuesim", description="Disaster rescue benchmark tools.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a scene dataset")
    g.add_argument("--task", choices=TASKS, required=True)
    g.add_argument("--seed", type=int, default=0, help="master seed")
    g.add_argument("--scenes-per-room", type=int, default=25)
    g.add_argument("--out", required=True)

    _run_flags(sub.add_parser("run", help="run episodes for one agent"))
    _run_flags(sub.add_parser("compare", help="run several agents and print one table"), multi_agent=True)

    e = sub.add_parser("eval", help="aggregate a run directory into result tables")
    e.add_argument("run_dir")
    e.add_argument("--out", help="where to write results.csv/results.txt (default: the run directory)")

    o = sub.add_parser("oracle", help="write oracle demonstrations for the training split")
    o.add_argument("--task", choices=TASKS, required=True)
    o.add_argument("--dataset", required=True)
    o.add_argument("--limit", type=int, dest="frame_limit")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out", help="demonstration file (default: <dataset>/demonstrations.jsonl)")

    r = sub.add_parser("replay", help="re-run a logged episode and verify its frame log")
    r.add_argument("episode_dir")
    return p


def _config_from(args: argparse.Namespace) -> RunConfig:
    base = RunConfig.load(args.config) if args.config else RunConfig()
    over: dict[str, Any] = {}
    for name in ("task", "dataset", "agent", "seeds", "frame_limit", "split", "max_scenes", "out", "llm_mock"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    if args.agent_effects is not None:
        over["agent_effects"] = args.agent_effects
    if args.simulations is not None:
        over["agent_params"] = {**base.agent_params, "simulations": args.simulations}
    return dataclasses.replace(base, **over)


def _scenes(cfg: RunConfig) -> list[tuple[str, Any]]:
    root = Path(cfg.dataset)
    manifest = load_manifest(root / "manifest.json")
    if manifest["task"] != cfg.task:
        raise UsageError(f"dataset {root} is for task {manifest['task']!r}, not {cfg.task!r}")
    entries = [e for e in manifest["entries"] if cfg.split == "all" or e["split"] == cfg.split]
    if cfg.max_scenes is not None:
        entries = entries[: cfg.max_scenes]
    return [(Path(e["scene_path"]).stem, load_scene(root / e["scene_path"])) for e in entries]


def _policy(cfg: RunConfig, agent: str):
    if agent != "llm":
        return make_policy(agent, cfg.agent_params if agent == "mcts" else None)
    llm_cfg = LlmConfig(**cfg.llm)
    if cfg.llm_mock == "greedy":
        policy = LlmPolicy(MockChat(), llm_cfg)
        policy.client.responder = greedy_responder(policy)
        return policy
    return LlmPolicy(HttpChatClient(llm_cfg), llm_cfg)


def _run_agent(cfg: RunConfig, agent: str, scenes) -> list:
    physics = PhysicsParams(agent_effects_enabled=cfg.agent_effects)
    results = []
    for name, scene in scenes:
        for seed in cfg.seeds:
            scene_id = name if len(cfg.seeds) == 1 else f"{name}_s{seed}"
            log = EpisodeLog()
            result = run_episode(scene, _policy(cfg, agent), scene_id=scene_id, seed=seed,
                                 frame_limit=cfg.limit, physics=physics, log=log)
            d = episode_dir(cfg.out, cfg.task, agent, scene_id)
            log.save(d)
            save_result(result, d)
            results.append(result)
            logger.info("%s %s %s: %d rescues in %d frames%s", cfg.task, agent, scene_id, len(result.rescues),
                        result.frames_used, " (failed)" if result.failed else "")
    return results


def cmd_gen(args) -> int:
    config = GenConfig(args.task, builtin_templates(args.task), scenes_per_room=args.scenes_per_room)
    manifest = generate_dataset(config, args.seed, args.out)
    n_test = sum(1 for e in manifest["entries"] if e["split"] == "test")
    print(f"wrote {len(manifest['entries'])} {args.task} scenes ({n_test} test) to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config_from(args)
    results = _run_agent(cfg, cfg.agent, _scenes(cfg))
    print(render_text(aggregate_results(results)), end="")
    return EXIT_RUNTIME if any(r.failed for r in results) else EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config_from(args)
    agents = args.agents.split(",") if args.agents else [cfg.agent]
    for a in agents:
        if a not in AGENTS:
            raise UsageError(f"unknown agent {a!r}")
    scenes = _scenes(cfg)
    results = []
    for a in agents:
        results += _run_agent(cfg, a, scenes)
    table = aggregate_results(results)
    emit_report(table, cfg.out)
    print(render_text(table), end="")
    return EXIT_RUNTIME if any(r.failed for r in results) else EXIT_OK


def cmd_eval(args) -> int:
    table = aggregate(args.run_dir)
    emit_report(table, args.out or args.run_dir)
    print(render_text(table), end="")
    return EXIT_OK


def cmd_oracle(args) -> int:
    root = Path(args.dataset)
    manifest = load_manifest(root / "manifest.json")
    if manifest["task"] != args.task:
        raise UsageError(f"dataset {root} is for task {manifest['task']!r}, not {args.task!r}")
    entries = [(Path(e["scene_path"]).stem, load_scene(root / e["scene_path"]))
               for e in manifest["entries"] if e["split"] == "train"]
    limit = args.frame_limit or default_frame_limit(args.task)
    out = args.out or str(root / "demonstrations.jsonl")
    records = write_demonstrations(entries, limit, out, seed=args.seed)
    print(f"wrote {len(records)} demonstrations to {out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    report = replay(args.episode_dir)
    if report.ok:
        print("replay matches the log")
        return EXIT_OK
    print(f"replay diverged: {report.detail}", file=sys.stderr)
    return EXIT_RUNTIME


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "compare": cmd_compare, "eval": cmd_eval,
            "oracle": cmd_oracle, "replay": cmd_replay}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"rescuesim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError) as exc:
        print(f"rescuesim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
