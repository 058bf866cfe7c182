"""Suite execution: sessions over scenarios, ablation grids, artifacts.

Per-run seeds derive from (base seed, scenario id, config name) through a
CRC so identical invocations are identical byte-for-byte, including noisy
detector draws. Trace and report files never contain durations; latency
goes to its own file.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from ..agent_loop import Session, TraceEvent, TurnRecord, stable_seed
from ..backend import ModelBackend, ScriptedBackend
from ..config import AblationFlags, AgentConfig
from ..errors import BackendFailure
from ..executor import ActionKind, AgentAction
from ..perception import NoiseProfile, default_registry
from ..world import BBox, SceneWorld, WorldEvent, apply_event
from .scenario import Scenario, canonical_json
from .scoring import RunReport, aggregate_reports, latency_stats, score_run

ABLATION_CONFIGS: dict[str, AblationFlags] = {
    "full": AblationFlags(),
    "no_memory": AblationFlags(disable_memory=True),
    "no_perception": AblationFlags(disable_perception=True),
    "no_planner": AblationFlags(disable_planner=True),
    "no_tools": AblationFlags(disable_tools=True),
}

DEFAULT_GRID = ("full", "no_memory", "no_perception", "no_planner", "no_tools")


def config_for(name: str, base: AgentConfig) -> AgentConfig:
    if name == "noisy_tools":
        return replace(base, flags=AblationFlags())
    if name not in ABLATION_CONFIGS:
        raise KeyError(f"unknown config name {name!r}")
    return replace(base, flags=ABLATION_CONFIGS[name])


@dataclass
class ScenarioRun:
    scenario: Scenario
    config_name: str
    transcript: list[TurnRecord]
    scenes_after: list[SceneWorld]
    report: RunReport
    trace: list[TraceEvent]


def run_scenario(
    scenario: Scenario,
    config: AgentConfig,
    config_name: str = "full",
    *,
    tool_noise: NoiseProfile | None = None,
    backend: ModelBackend | None = None,
) -> ScenarioRun:
    if backend is None:
        backend = ScriptedBackend(scenario.script)
    run_config = replace(config, seed=stable_seed(config.seed, scenario.id, config_name))
    tools = default_registry(noise=tool_noise)
    session = Session(
        scenario.scene,
        run_config,
        backend,
        tools,
        session_id=f"{scenario.id}:{config_name}",
    )
    transcript: list[TurnRecord] = []
    scenes_after: list[SceneWorld] = []
    error = ""
    for turn in scenario.turns:
        try:
            record = session.step(turn.instruction, turn.events)
        except BackendFailure as exc:
            error = f"backend failure on turn {len(transcript) + 1}: {exc}"
            break
        transcript.append(record)
        scenes_after.append(session.scene)
    report = score_run(
        scenario,
        transcript,
        scenes_after,
        config_name,
        margin=config.margin,
    )
    report.error = error
    return ScenarioRun(scenario, config_name, transcript, scenes_after, report, session.trace)


@dataclass
class SuiteResult:
    runs: dict[str, list[ScenarioRun]] = field(default_factory=dict)
    aggregates: dict[str, dict[str, Any]] = field(default_factory=dict)
    latency: dict[str, dict[str, Any]] = field(default_factory=dict)

    def report_dict(self) -> dict[str, Any]:
        return {
            "aggregates": self.aggregates,
            "scenarios": {
                config: [run.report.to_dict() for run in runs]
                for config, runs in self.runs.items()
            },
        }

    def any_failed(self) -> bool:
        return any(run.report.error for runs in self.runs.values() for run in runs)


def run_suite(
    scenarios: Sequence[Scenario],
    config_names: Sequence[str] = ("full",),
    base_config: AgentConfig | None = None,
    noise_map: Mapping[str, NoiseProfile] | None = None,
) -> SuiteResult:
    base = base_config or AgentConfig()
    noise_map = noise_map or {}
    result = SuiteResult()
    for name in config_names:
        config = config_for(name, base)
        runs = [
            run_scenario(s, config, name, tool_noise=noise_map.get(name))
            for s in scenarios
        ]
        result.runs[name] = runs
        reports = [run.report for run in runs]
        result.aggregates[name] = aggregate_reports(reports, name)
        result.latency[name] = latency_stats(reports)
    return result


def trace_lines(run: ScenarioRun) -> str:
    return "\n".join(canonical_json(e.to_dict(include_duration=False)) for e in run.trace)


def write_bench_artifacts(result: SuiteResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    traces = out / "traces"
    traces.mkdir(parents=True, exist_ok=True)
    for config, runs in result.runs.items():
        for run in runs:
            path = traces / f"{run.scenario.id}__{config}.jsonl"
            path.write_text(trace_lines(run) + "\n")
    report_path = out / "report.json"
    report_path.write_text(canonical_json(result.report_dict()) + "\n")
    latency_path = out / "latency.json"
    latency_path.write_text(canonical_json(result.latency) + "\n")
    return {"report": report_path, "latency": latency_path, "traces": traces}


def oracle_replay(scenario: Scenario, margin: float) -> RunReport:
    """Replay the scenario from its gold annotations and score it.

    Proves every check is satisfiable by a perfect agent; used as a
    generation-time gate.
    """
    scene = scenario.scene
    transcript: list[TurnRecord] = []
    scenes_after: list[SceneWorld] = []
    for turn_no, turn in enumerate(scenario.turns, start=1):
        applied: list[dict[str, Any]] = []
        for event in turn.events:
            scene = apply_event(scene, event)
            applied.append(event.to_dict())
        revision_before = scene.revision
        gold = turn.gold
        primary: list[AgentAction] = []
        answers: dict[str, str] = {}
        subtask_results: list[dict[str, Any]] = []
        for i, action_spec in enumerate(gold.get("actions", []), start=1):
            sid = f"s{i}"
            kind = action_spec["kind"]
            if kind == "point":
                action = AgentAction(
                    ActionKind.POINT,
                    entity_id=action_spec["entity_id"],
                    subtask_id=sid,
                    entity_refs=(action_spec["entity_id"],),
                )
            elif kind == "respond":
                action = AgentAction(
                    ActionKind.RESPOND, text=str(action_spec["text"]), subtask_id=sid
                )
                answers[sid] = str(action_spec["text"])
            elif kind == "move":
                bbox = BBox.from_list(action_spec["bbox"])
                event = WorldEvent.move(action_spec["entity_id"], bbox)
                scene = apply_event(scene, event)
                action = AgentAction(
                    ActionKind.WORLD_EVENT,
                    entity_id=action_spec["entity_id"],
                    bbox=bbox,
                    event=event,
                    subtask_id=sid,
                    entity_refs=(action_spec["entity_id"],),
                )
            else:
                raise ValueError(f"unknown gold action kind {kind!r}")
            primary.append(action)
            subtask_results.append(
                {"subtask_id": sid, "objective": "", "status": "done", "attempts": 1}
            )
        record = TurnRecord(
            turn=turn_no,
            instruction=turn.instruction,
            events=applied,
            intents=list(turn.annotated_intents),
            primary_actions=primary,
            summary_action=AgentAction(ActionKind.RESPOND, text="ok", subtask_id="summary"),
            all_actions=list(primary),
            answers=answers,
            subtask_results=subtask_results,
            resolved_ids=list(gold.get("resolved", [])),
            focus=[],
            scene_revision_before=revision_before,
            scene_revision_after=scene.revision,
        )
        transcript.append(record)
        scenes_after.append(scene)
    return score_run(scenario, transcript, scenes_after, "oracle", margin=margin)
