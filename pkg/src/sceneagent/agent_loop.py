"""The per-turn cycle: perceive, retrieve, plan, execute, verify, memorize.

A Session owns the evolving scene, the memory, the backend, and the trace.
Each step consumes optional world events plus one instruction and yields a
TurnRecord. Trace events are emitted batched in phase order; wall-clock
durations live only on the in-memory objects, never in canonical dumps, so
two identical runs serialize identically.
"""

from __future__ import annotations

import random
import time
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .backend import CompletionParams, ModelBackend
from .config import AgentConfig
from .errors import AgentError, BackendFailure
from .executor import (
    ActionKind,
    AgentAction,
    CorrectionPolicy,
    ExecutionOutcome,
    Executor,
)
from .memory import MemoryState, extract_mentions, render_context, retrieve, update_memory
from .perception import Percept, ToolRegistry, default_registry, perceive
from .planner import (
    Instruction,
    Plan,
    make_plan,
    parse_instruction,
    passthrough_plan,
)
from .world import SceneWorld, WorldEvent, apply_event

PHASE_ORDER = ("perceive", "retrieve", "plan", "execute", "verify", "correct", "memorize")


@dataclass
class TraceEvent:
    turn: int
    phase: str
    seq: int
    payload: dict[str, Any]
    duration_ms: float = 0.0

    def to_dict(self, include_duration: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {
            "turn": self.turn,
            "phase": self.phase,
            "seq": self.seq,
            "payload": self.payload,
        }
        if include_duration:
            out["duration_ms"] = round(self.duration_ms, 3)
        return out


@dataclass
class ScriptedTurn:
    instruction: str
    events: list[WorldEvent] = field(default_factory=list)


@dataclass
class TurnRecord:
    turn: int
    instruction: str
    events: list[dict[str, Any]]
    intents: list[str]
    primary_actions: list[AgentAction]
    summary_action: AgentAction | None
    all_actions: list[AgentAction]
    answers: dict[str, str]
    subtask_results: list[dict[str, Any]]
    resolved_ids: list[str]
    focus: list[str]
    scene_revision_before: int
    scene_revision_after: int
    duration_ms: float = 0.0
    phase_durations: dict[str, float] = field(default_factory=dict)

    def final_actions(self) -> list[AgentAction]:
        actions = list(self.primary_actions)
        if self.summary_action is not None:
            actions.append(self.summary_action)
        return actions

    def to_dict(self, include_timing: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {
            "turn": self.turn,
            "instruction": self.instruction,
            "events": self.events,
            "intents": self.intents,
            "actions": [a.to_dict() for a in self.primary_actions],
            "summary": self.summary_action.to_dict() if self.summary_action else None,
            "all_actions": [a.to_dict() for a in self.all_actions],
            "answers": dict(sorted(self.answers.items())),
            "subtasks": self.subtask_results,
            "resolved_ids": self.resolved_ids,
            "focus": self.focus,
            "scene_revision_before": self.scene_revision_before,
            "scene_revision_after": self.scene_revision_after,
        }
        if include_timing:
            out["duration_ms"] = round(self.duration_ms, 3)
            out["phase_durations_ms"] = {
                k: round(v, 3) for k, v in sorted(self.phase_durations.items())
            }
        return out


def stable_seed(*parts: Any) -> int:
    """Deterministic cross-process seed from arbitrary labels."""
    acc = 0
    for part in parts:
        # separator keeps ("a", "b") distinct from ("ab",)
        acc = zlib.crc32(str(part).encode("utf-8") + b"\x1f", acc)
    return acc


class Session:
    """One dialogue: scene + memory + backend + accumulated trace."""

    def __init__(
        self,
        scene: SceneWorld,
        config: AgentConfig,
        backend: ModelBackend,
        tools: ToolRegistry | None = None,
        session_id: str = "local",
    ) -> None:
        self.id = session_id
        self.scene = scene
        self.config = config
        self.backend = backend
        self.tools = tools if tools is not None else default_registry()
        self.memory = MemoryState(config.memory)
        self.rng = random.Random(config.seed)
        self.executor = Executor(
            backend,
            CorrectionPolicy(config.max_retries),
            margin=config.margin,
            params=CompletionParams(seed=config.seed),
        )
        self.transcript: list[TurnRecord] = []
        self.trace: list[TraceEvent] = []
        self.last_plan: Plan | None = None
        self._seq = 0

    def _emit(
        self,
        turn: int,
        phase: str,
        payload: dict[str, Any],
        duration_ms: float,
        on_trace: Callable[[TraceEvent], None] | None,
    ) -> None:
        self._seq += 1
        event = TraceEvent(turn, phase, self._seq, payload, duration_ms)
        self.trace.append(event)
        if on_trace is not None:
            on_trace(event)

    def step(
        self,
        instruction_text: str,
        events: Sequence[WorldEvent] = (),
        on_trace: Callable[[TraceEvent], None] | None = None,
    ) -> TurnRecord:
        """Run one turn. BackendFailure propagates; other domain errors have
        already been converted to clarifications downstream."""
        turn = len(self.transcript) + 1
        flags = self.config.flags
        t_turn = time.perf_counter()
        revision_before = self.scene.revision

        applied: list[dict[str, Any]] = []
        for event in events:
            self.scene = apply_event(self.scene, event)
            applied.append(event.to_dict())

        instruction = Instruction(raw=instruction_text, turn=turn)
        active_memory = MemoryState(self.config.memory) if flags.disable_memory else self.memory

        t0 = time.perf_counter()
        percept = perceive(
            self.scene,
            active_memory,
            instruction,
            self.tools,
            flags,
            rng=self.rng,
            margin=self.config.margin,
            n_focus=self.config.n_focus,
        )
        d_perceive = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        hints = extract_mentions(instruction_text, self.scene)
        retrieved = retrieve(active_memory, instruction_text, hints)
        context_text = render_context(retrieved)
        d_retrieve = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        if flags.disable_planner:
            intents: list[Any] = []
            plan = passthrough_plan(instruction_text)
        else:
            intents = parse_instruction(
                instruction, mode=self.config.parser_mode, backend=self.backend
            )
            plan = make_plan(intents, percept, active_memory)
        self.last_plan = plan
        d_plan = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        outcome = self.executor.run_plan(
            plan,
            instruction,
            percept,
            active_memory,
            self.scene,
            context_text,
            confirm_detections=not flags.disable_tools,
        )
        assert outcome.scene is not None
        self.scene = outcome.scene
        d_execute = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        if not flags.disable_memory:
            self.memory = update_memory(
                self.memory,
                instruction,
                outcome.final_actions,
                outcome.thoughts,
                scene=self.scene,
            )
        d_memorize = (time.perf_counter() - t0) * 1000.0

        record = self._build_record(
            turn, instruction_text, applied, intents, outcome, percept, revision_before
        )
        record.duration_ms = (time.perf_counter() - t_turn) * 1000.0
        record.phase_durations = {
            "perceive": d_perceive,
            "retrieve": d_retrieve,
            "plan": d_plan,
            "execute": d_execute,
            "memorize": d_memorize,
        }
        self.transcript.append(record)

        self._emit(
            turn,
            "perceive",
            {
                "focus": list(percept.focused),
                "fact_count": len(percept.facts),
                "detection_count": sum(len(o.detections) for o in percept.tool_outputs),
                "scene_revision": percept.scene_revision,
            },
            d_perceive,
            on_trace,
        )
        self._emit(
            turn,
            "retrieve",
            {"entry_ids": [e.id for e in retrieved], "count": len(retrieved)},
            d_retrieve,
            on_trace,
        )
        self._emit(
            turn,
            "plan",
            {
                "goal": plan.goal,
                "subtasks": [
                    {
                        "id": t.id,
                        "objective": t.objective_text,
                        "depends_on": list(t.depends_on),
                    }
                    for t in plan.subtasks
                ],
            },
            d_plan,
            on_trace,
        )
        self._emit(
            turn,
            "execute",
            {
                "actions": [a.to_dict() for a in outcome.all_actions],
                "final": [a.to_dict() for a in record.final_actions()],
            },
            d_execute,
            on_trace,
        )
        for verify_payload in outcome.verify_events:
            self._emit(turn, "verify", verify_payload, 0.0, on_trace)
        for correct_payload in outcome.correction_events:
            self._emit(turn, "correct", correct_payload, 0.0, on_trace)
        self._emit(
            turn,
            "memorize",
            {
                "short_count": len(self.memory.short),
                "long_count": len(self.memory.long),
                "current_turn": self.memory.current_turn,
                "skipped": flags.disable_memory,
            },
            d_memorize,
            on_trace,
        )
        return record

    def _build_record(
        self,
        turn: int,
        instruction_text: str,
        applied: list[dict[str, Any]],
        intents: Sequence[Any],
        outcome: ExecutionOutcome,
        percept: Percept,
        revision_before: int,
    ) -> TurnRecord:
        primary = [a for a in outcome.final_actions if a.subtask_id != "summary"]
        summary = next(
            (a for a in outcome.final_actions if a.subtask_id == "summary"), None
        )
        resolved: list[str] = []
        for result in outcome.subtask_results:
            for eid in result.resolved_ids:
                if eid not in resolved:
                    resolved.append(eid)
        return TurnRecord(
            turn=turn,
            instruction=instruction_text,
            events=applied,
            intents=[i.canonical() for i in intents],
            primary_actions=primary,
            summary_action=summary,
            all_actions=list(outcome.all_actions),
            answers=dict(outcome.answers),
            subtask_results=[r.to_dict() for r in outcome.subtask_results],
            resolved_ids=resolved,
            focus=list(percept.focused),
            scene_revision_before=revision_before,
            scene_revision_after=self.scene.revision,
        )


def run_dialogue(
    session: Session,
    turns: Sequence[ScriptedTurn],
    on_trace: Callable[[TraceEvent], None] | None = None,
) -> list[TurnRecord]:
    """Run scripted turns in order; a backend failure aborts the dialogue."""
    records: list[TurnRecord] = []
    for scripted in turns:
        try:
            records.append(session.step(scripted.instruction, scripted.events, on_trace))
        except BackendFailure:
            raise
        except AgentError as exc:
            raise AgentError(f"turn {len(records) + 1} failed unexpectedly: {exc}") from exc
    return records
