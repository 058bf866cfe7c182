"""Command-line entry points.

Exit codes: 0 success, 1 scenario failure, 2 configuration or input error,
3 backend failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .agent_loop import Session
from .backend import ScriptedBackend, ScriptedRule
from .config import AblationFlags, AgentConfig
from .errors import AgentError, BackendFailure, ConfigError, ScenarioFormatError
from .harness import (
    DEFAULT_GRID,
    aggregate_reports,
    canonical_json,
    generate_scenario,
    load_scenario,
    load_suite,
    render_bucket_table,
    render_error_table,
    render_latency_table,
    render_score_table,
    run_scenario,
    run_suite,
    save_suite,
    write_bench_artifacts,
)
from .harness.runner import config_for
from .oracle import GroundTruthBackend
from .perception import NoiseProfile
from .world import SceneWorld

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_BACKEND = 3

_GEN_ORDER = ("golden", "memory", "compound", "perception", "detection")
_DEFAULT_NOISE = NoiseProfile(drop_prob=0.3, jitter=0.02)


def _flags_from_args(args: argparse.Namespace) -> AblationFlags:
    return AblationFlags(
        disable_memory=args.no_memory,
        disable_perception=args.no_perception,
        disable_planner=args.no_planner,
        disable_tools=args.no_tools,
    )


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    if args.config:
        name = args.config
        base = config_for(name, AgentConfig(seed=args.seed))
    else:
        flags = _flags_from_args(args)
        name = "custom" if any(flags.to_dict().values()) else "full"
        base = AgentConfig(flags=flags, seed=args.seed)
    noise = _DEFAULT_NOISE if args.noisy else None
    run = run_scenario(scenario, base, name, tool_noise=noise)
    for res in run.report.check_results:
        status = "PASS" if res.passed else "FAIL"
        line = f"[{status}] turn {res.turn} {res.kind.value} ({res.dimension.value})"
        if res.detail:
            line += f": {res.detail}"
        print(line)
    for i, flags_raised in enumerate(run.report.turn_flags, start=1):
        if flags_raised:
            print(f"turn {i} error flags: {', '.join(flags_raised)}")
    print()
    print(render_score_table({name: aggregate_reports([run.report], name)}))
    if run.report.error:
        print(f"error: {run.report.error}", file=sys.stderr)
        return EXIT_BACKEND
    failed = sum(1 for r in run.report.check_results if not r.passed)
    print(f"\n{scenario.id}: {len(run.report.check_results) - failed}"
          f"/{len(run.report.check_results)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    scenarios = load_suite(args.directory)
    configs = list(DEFAULT_GRID) if args.ablate == "all" else ["full"]
    noise_map = None
    if args.noisy:
        configs.append("noisy_tools")
        noise_map = {"noisy_tools": _DEFAULT_NOISE}
    result = run_suite(scenarios, configs, AgentConfig(seed=args.seed), noise_map)
    paths = write_bench_artifacts(result, args.out)
    print(render_score_table(result.aggregates))
    print()
    print(render_bucket_table(result.aggregates))
    print()
    print(render_error_table(result.aggregates))
    print()
    print(render_latency_table(result.latency))
    print(f"\nreport: {paths['report']}\nlatency: {paths['latency']}\ntraces: {paths['traces']}")
    if result.any_failed():
        print("error: one or more runs aborted; see report failed_runs", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def _cmd_gen(args: argparse.Namespace) -> int:
    specs = [(_GEN_ORDER[i % len(_GEN_ORDER)], i // len(_GEN_ORDER)) for i in range(args.count)]
    scenarios = [generate_scenario(a, idx, args.seed) for a, idx in specs]
    for path in save_suite(scenarios, args.out):
        print(path)
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    try:
        text = Path(args.trace).read_text()
    except OSError as exc:
        raise ScenarioFormatError(f"cannot read trace: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            event = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScenarioFormatError(f"trace line {lineno} is not JSON: {exc}") from exc
        print(canonical_json(event))
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    serve(port=args.port, scenario_dir=args.scenarios, trace_dir=args.trace_dir)
    return EXIT_OK


def _load_scene_file(path: str) -> tuple[SceneWorld, list[ScriptedRule]]:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioFormatError(f"cannot read scene: {exc}") from exc
    if "entities" in raw:
        return SceneWorld.from_dict(raw), []
    if "scene" in raw:
        rules = [ScriptedRule.from_dict(r) for r in raw.get("script", [])]
        return SceneWorld.from_dict(raw["scene"]), rules
    raise ScenarioFormatError("expected a scene or scenario JSON file")


def _cmd_chat(args: argparse.Namespace) -> int:
    scene, rules = _load_scene_file(args.scene)
    config = AgentConfig(seed=args.seed)
    if rules and not args.oracle:
        backend = ScriptedBackend(rules)
        session = Session(scene, config, backend, session_id="chat")
    else:
        backend = GroundTruthBackend()
        session = Session(scene, config, backend, session_id="chat")
        backend.bind(lambda: session)
    print(f"{len(scene.entities)} entities; type an instruction, or 'exit'")
    while True:
        try:
            line = input("you> ").strip()
        except EOFError:
            print()
            break
        if not line:
            continue
        if line.lower() in ("exit", "quit"):
            break
        record = session.step(line)
        for action in record.final_actions():
            print(f"  [{action.kind.value}] {action.summary()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sceneagent",
        description="Scene-grounded dialogue agent and its benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario and print its report")
    run_p.add_argument("scenario", help="scenario JSON file")
    run_p.add_argument("--config", help="named config (full, no_memory, ...)")
    run_p.add_argument("--no-memory", action="store_true")
    run_p.add_argument("--no-perception", action="store_true")
    run_p.add_argument("--no-planner", action="store_true")
    run_p.add_argument("--no-tools", action="store_true")
    run_p.add_argument("--noisy", action="store_true", help="noisy detector")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.set_defaults(func=_cmd_run)

    bench_p = sub.add_parser("bench", help="run a scenario directory across configs")
    bench_p.add_argument("directory", help="directory of scenario JSON files")
    bench_p.add_argument("--ablate", choices=["all"], help="add the ablation grid")
    bench_p.add_argument("--noisy", action="store_true", help="add a noisy_tools config")
    bench_p.add_argument("--seed", type=int, default=0)
    bench_p.add_argument("--out", default="out", help="artifact directory")
    bench_p.set_defaults(func=_cmd_bench)

    gen_p = sub.add_parser("gen", help="generate scenarios")
    gen_p.add_argument("--seed", type=int, default=11)
    gen_p.add_argument("--count", type=int, default=20)
    gen_p.add_argument("--out", default="scenarios", help="output directory")
    gen_p.set_defaults(func=_cmd_gen)

    replay_p = sub.add_parser("replay", help="re-print a trace file canonically")
    replay_p.add_argument("trace", help="trace .jsonl file")
    replay_p.set_defaults(func=_cmd_replay)

    serve_p = sub.add_parser("serve", help="start the HTTP service")
    serve_p.add_argument("--port", type=int, default=8700)
    serve_p.add_argument("--scenarios", help="scenario directory to expose")
    serve_p.add_argument("--trace-dir", help="directory for run artifacts")
    serve_p.set_defaults(func=_cmd_serve)

    chat_p = sub.add_parser("chat", help="interactive terminal session")
    chat_p.add_argument("scene", help="scene or scenario JSON file")
    chat_p.add_argument("--seed", type=int, default=0)
    chat_p.add_argument("--oracle", action="store_true",
                        help="answer from ground truth even if the file has a script")
    chat_p.set_defaults(func=_cmd_chat)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BackendFailure as exc:
        print(f"error: backend: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ConfigError, ScenarioFormatError, KeyError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AgentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
