"""Action generation, verification, and bounded self-correction.

The executor derives each sub-task's expectation from ground truth before
asking the backend for an action, so verification never trusts the reply it
is checking. Replies use a fixed directive grammar:

    ACT POINT <id>
    ACT MOVE <id> <x> <y> <w> <h>
    ACT SAY <text>
    ACT ASK <text>

Free text becomes a Respond; an empty or malformed directive counts as a
mismatch and enters the correction loop like any failed verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping, Sequence

from .backend import CompletionParams, ModelBackend, Phase, PromptBundle, SYSTEM_TEMPLATES
from .errors import (
    DepthExceeded,
    DuplicateId,
    InvalidBBox,
    MalformedActionReply,
    SelfRelation,
    UnknownEntity,
    UnresolvedReference,
)
from .memory import MemoryState
from .perception import Percept
from .planner import (
    Answer,
    Instruction,
    Intent,
    Plan,
    RelationRef,
    Subtask,
    SubtaskStatus,
    Verb,
    make_plan,
    reason,
    resolve_single,
)
from .world import BBox, DEFAULT_MARGIN, SceneWorld, WorldEvent, apply_event


class ActionKind(str, Enum):
    RESPOND = "respond"
    POINT = "point"
    HIGHLIGHT = "highlight"
    CLARIFY = "clarify"
    WORLD_EVENT = "world_event"


@dataclass(frozen=True)
class AgentAction:
    kind: ActionKind
    text: str = ""
    entity_id: str | None = None
    entity_ids: tuple[str, ...] = ()
    bbox: BBox | None = None
    event: WorldEvent | None = None
    subtask_id: str = ""
    attempt: int = 1
    escalated: bool = False
    entity_refs: tuple[str, ...] = ()

    def summary(self) -> str:
        if self.kind is ActionKind.POINT:
            return f"point {self.entity_id}"
        if self.kind is ActionKind.WORLD_EVENT:
            return f"move {self.entity_id}"
        if self.kind is ActionKind.HIGHLIGHT:
            return f"highlight {' '.join(self.entity_ids)}"
        if self.kind is ActionKind.CLARIFY:
            return f"ask {self.text}"
        return f"say {self.text}"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "kind": self.kind.value,
            "subtask_id": self.subtask_id,
            "attempt": self.attempt,
        }
        if self.text:
            out["text"] = self.text
        if self.entity_id is not None:
            out["entity_id"] = self.entity_id
        if self.entity_ids:
            out["entity_ids"] = list(self.entity_ids)
        if self.bbox is not None:
            out["bbox"] = self.bbox.as_list()
        if self.event is not None:
            out["event"] = self.event.to_dict()
        if self.escalated:
            out["escalated"] = True
        if self.entity_refs:
            out["entity_refs"] = list(self.entity_refs)
        return out


class ExpectationKind(str, Enum):
    ENTITY_RESOLVED = "entity_resolved"
    RELATION_AFTER = "relation_after"
    ANSWER_EQUALS = "answer_equals"
    ACTION_KIND = "action_kind"


@dataclass(frozen=True)
class Expectation:
    kind: ExpectationKind
    entity_id: str | None = None
    relation: RelationRef | None = None
    a: str | None = None
    b: str | None = None
    value: str | None = None
    action_kind: ActionKind | None = None

    def describe(self) -> str:
        if self.kind is ExpectationKind.ENTITY_RESOLVED:
            return f"point at {self.entity_id}"
        if self.kind is ExpectationKind.RELATION_AFTER:
            return f"after acting, {self.relation.fact_line(self.a, self.b)}"
        if self.kind is ExpectationKind.ANSWER_EQUALS:
            return f"answer '{self.value}'"
        return f"action of kind {self.action_kind.value}"


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str = ""
    detail: str = ""


@dataclass(frozen=True)
class CorrectionPolicy:
    max_retries: int = 2

    def max_attempts(self) -> int:
        return self.max_retries + 1


def parse_action_reply(
    reply: str,
    scene: SceneWorld,
    subtask_id: str = "",
    attempt: int = 1,
) -> AgentAction:
    """Parse one backend completion into an action.

    Ids are not existence-checked here: a fabricated id must survive parsing
    so verification and the error classifier can see it.
    """
    text = reply.strip()
    if not text:
        raise MalformedActionReply("empty reply")
    line = text.splitlines()[0].strip()
    if not line.startswith("ACT "):
        return AgentAction(
            ActionKind.RESPOND, text=text, subtask_id=subtask_id, attempt=attempt
        )
    parts = line.split()
    if len(parts) < 2:
        raise MalformedActionReply(f"bare directive: {line!r}")
    verb = parts[1]
    if verb == "POINT":
        if len(parts) != 3:
            raise MalformedActionReply(f"POINT takes one id: {line!r}")
        eid = parts[2]
        ent = scene.get(eid)
        return AgentAction(
            ActionKind.POINT,
            entity_id=eid,
            bbox=ent.bbox if ent is not None else None,
            subtask_id=subtask_id,
            attempt=attempt,
            entity_refs=(eid,),
        )
    if verb == "MOVE":
        if len(parts) != 7:
            raise MalformedActionReply(f"MOVE takes id and four numbers: {line!r}")
        eid = parts[2]
        try:
            bbox = BBox(*(float(p) for p in parts[3:7]))
        except (ValueError, InvalidBBox) as exc:
            raise MalformedActionReply(f"bad MOVE box: {exc}") from exc
        return AgentAction(
            ActionKind.WORLD_EVENT,
            entity_id=eid,
            bbox=bbox,
            event=WorldEvent.move(eid, bbox),
            subtask_id=subtask_id,
            attempt=attempt,
            entity_refs=(eid,),
        )
    if verb == "SAY":
        payload = line[len("ACT SAY ") :].strip() if len(parts) > 2 else ""
        if not payload:
            raise MalformedActionReply("SAY without text")
        return AgentAction(
            ActionKind.RESPOND, text=payload, subtask_id=subtask_id, attempt=attempt
        )
    if verb == "ASK":
        payload = line[len("ACT ASK ") :].strip() if len(parts) > 2 else ""
        if not payload:
            raise MalformedActionReply("ASK without text")
        return AgentAction(
            ActionKind.CLARIFY, text=payload, subtask_id=subtask_id, attempt=attempt
        )
    raise MalformedActionReply(f"unknown directive verb {verb!r}")


def _normalize_answer(text: str) -> str:
    return " ".join(text.strip().lower().split())


def verify(
    action: AgentAction,
    expectation: Expectation | None,
    scene: SceneWorld,
    *,
    margin: float = DEFAULT_MARGIN,
) -> Verdict:
    """Check an action against its expectation on the post-action scene."""
    if expectation is None:
        return Verdict(True)
    if expectation.kind is ExpectationKind.ENTITY_RESOLVED:
        if action.kind is not ActionKind.POINT:
            return Verdict(False, "wrong-action-kind", f"expected a point, got {action.kind.value}")
        if action.entity_id != expectation.entity_id:
            return Verdict(
                False,
                "wrong-entity",
                f"expected {expectation.entity_id}, pointed at {action.entity_id}",
            )
        return Verdict(True)
    if expectation.kind is ExpectationKind.RELATION_AFTER:
        if action.kind is not ActionKind.WORLD_EVENT:
            return Verdict(False, "wrong-action-kind", f"expected a move, got {action.kind.value}")
        try:
            holds = expectation.relation.holds_between(
                expectation.a, expectation.b, scene, margin=margin
            )
        except (UnknownEntity, SelfRelation) as exc:
            return Verdict(False, "relation-unsatisfied", str(exc))
        if not holds:
            return Verdict(
                False,
                "relation-unsatisfied",
                f"{expectation.relation.fact_line(expectation.a, expectation.b)} does not hold",
            )
        return Verdict(True)
    if expectation.kind is ExpectationKind.ANSWER_EQUALS:
        if action.kind is not ActionKind.RESPOND:
            return Verdict(False, "wrong-action-kind", f"expected an answer, got {action.kind.value}")
        if _normalize_answer(action.text) != _normalize_answer(expectation.value or ""):
            return Verdict(
                False, "wrong-answer", f"expected '{expectation.value}', got '{action.text}'"
            )
        return Verdict(True)
    if expectation.kind is ExpectationKind.ACTION_KIND:
        if action.kind is not expectation.action_kind:
            return Verdict(
                False,
                "wrong-action-kind",
                f"expected {expectation.action_kind.value}, got {action.kind.value}",
            )
        return Verdict(True)
    raise ValueError(f"unhandled expectation kind {expectation.kind!r}")


@dataclass
class AttemptRecord:
    subtask_id: str
    attempt: int
    reply: str
    action: AgentAction | None
    verdict: Verdict

    def to_dict(self) -> dict[str, Any]:
        return {
            "subtask_id": self.subtask_id,
            "attempt": self.attempt,
            "reply": self.reply,
            "action": self.action.to_dict() if self.action else None,
            "ok": self.verdict.ok,
            "reason": self.verdict.reason,
            "detail": self.verdict.detail,
        }


@dataclass
class SubtaskResult:
    subtask_id: str
    objective_text: str
    status: SubtaskStatus
    attempts: int
    resolved_ids: tuple[str, ...] = ()
    answer_text: str | None = None
    expectation: str = ""
    escalated: bool = False
    final_kind: ActionKind | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "subtask_id": self.subtask_id,
            "objective": self.objective_text,
            "status": self.status.value,
            "attempts": self.attempts,
        }
        if self.resolved_ids:
            out["resolved_ids"] = list(self.resolved_ids)
        if self.answer_text is not None:
            out["answer"] = self.answer_text
        if self.expectation:
            out["expectation"] = self.expectation
        if self.escalated:
            out["escalated"] = True
        return out


@dataclass
class ExecutionOutcome:
    final_actions: list[AgentAction] = field(default_factory=list)
    all_actions: list[AgentAction] = field(default_factory=list)
    attempts: list[AttemptRecord] = field(default_factory=list)
    scene: SceneWorld | None = None
    thoughts: list[str] = field(default_factory=list)
    answers: dict[str, str] = field(default_factory=dict)
    subtask_results: list[SubtaskResult] = field(default_factory=list)
    verify_events: list[dict[str, Any]] = field(default_factory=list)
    correction_events: list[dict[str, Any]] = field(default_factory=list)


_APPLY_ERRORS = (UnknownEntity, DuplicateId, InvalidBBox)


class Executor:
    """Runs a plan's subtasks through the backend with verification."""

    def __init__(
        self,
        backend: ModelBackend,
        policy: CorrectionPolicy | None = None,
        *,
        margin: float = DEFAULT_MARGIN,
        params: CompletionParams | None = None,
    ) -> None:
        self.backend = backend
        self.policy = policy or CorrectionPolicy()
        self.margin = margin
        self.params = params or CompletionParams()

    def run_plan(
        self,
        plan: Plan,
        instruction: Instruction,
        percept: Percept,
        memory: MemoryState,
        scene: SceneWorld,
        context_text: str = "",
        *,
        confirm_detections: bool = False,
    ) -> ExecutionOutcome:
        outcome = ExecutionOutcome(scene=scene)
        detected = percept.detected_ids() if confirm_detections else None
        for task in plan.subtasks:
            task.advance(SubtaskStatus.ACTIVE)
            self._run_subtask(task, instruction, percept, memory, outcome, context_text, detected)
        self._append_summary(outcome)
        return outcome

    def _run_subtask(
        self,
        task: Subtask,
        instruction: Instruction,
        percept: Percept,
        memory: MemoryState,
        outcome: ExecutionOutcome,
        context_text: str,
        detected: set[str] | None,
    ) -> None:
        intent = task.objective
        scene = outcome.scene
        assert scene is not None

        if intent is not None and intent.verb is Verb.CLARIFY_NEEDED:
            action = AgentAction(
                ActionKind.CLARIFY,
                text=f"please rephrase: {intent.note or instruction.raw}",
                subtask_id=task.id,
            )
            task.advance(SubtaskStatus.DONE)
            self._record_final(outcome, task, action, attempts=0)
            return

        expectation: Expectation | None = None
        resolved: tuple[str, ...] = ()
        answer: Answer | None = None
        if intent is not None:
            try:
                expectation, resolved, answer = self._derive_expectation(
                    intent, percept, memory, scene
                )
            except (UnresolvedReference, DepthExceeded, SelfRelation, UnknownEntity) as exc:
                # Degenerate resolution (nothing matches, or a question whose
                # operands collapse onto one entity) is a clarification case,
                # not a crash.
                action = AgentAction(ActionKind.CLARIFY, text=str(exc), subtask_id=task.id)
                task.advance(SubtaskStatus.FAILED)
                self._record_final(outcome, task, action, attempts=0)
                return
            if answer is not None:
                outcome.thoughts.extend(answer.derivation)
            if (
                detected is not None
                and intent.verb in (Verb.POINT, Verb.MOVE)
                and resolved
                and resolved[0] not in detected
            ):
                action = AgentAction(
                    ActionKind.CLARIFY,
                    text=f"cannot visually confirm {resolved[0]} for '{task.objective_text}'",
                    subtask_id=task.id,
                )
                task.advance(SubtaskStatus.FAILED)
                self._record_final(outcome, task, action, attempts=0)
                return

        final: AgentAction | None = None
        attempts_used = 0
        for attempt in range(1, self.policy.max_attempts() + 1):
            attempts_used = attempt
            phase = Phase.EXECUTE if attempt == 1 else Phase.CORRECT
            context = context_text
            if attempt > 1:
                last = outcome.attempts[-1]
                context = (
                    f"{context_text}\nNOTE previous attempt failed: "
                    f"{last.verdict.reason} ({last.verdict.detail})"
                )
                # Re-enter planning so the retry starts from a fresh sub-task
                # derivation rather than the failed attempt's leftovers.
                if intent is not None:
                    task.objective_text = make_plan([intent]).subtasks[0].objective_text
                outcome.correction_events.append(
                    {
                        "subtask_id": task.id,
                        "attempt": attempt,
                        "reason": last.verdict.reason,
                        "detail": last.verdict.detail,
                    }
                )
                outcome.thoughts.append(
                    f"retry {task.id} attempt {attempt}: {last.verdict.reason}"
                )
            bundle = PromptBundle(
                system=SYSTEM_TEMPLATES[phase],
                context=context,
                percept=percept.rendered_text,
                instruction=task.objective_text,
                phase=phase,
            )
            reply = self.backend.complete(bundle, self.params)

            action: AgentAction | None = None
            scene_after = outcome.scene
            try:
                action = parse_action_reply(reply, scene_after, task.id, attempt)
            except MalformedActionReply as exc:
                verdict = Verdict(False, "malformed-reply", str(exc))
            else:
                if action.kind is ActionKind.WORLD_EVENT:
                    try:
                        scene_after = apply_event(outcome.scene, action.event)
                    except _APPLY_ERRORS as exc:
                        verdict = Verdict(False, "wrong-entity", str(exc))
                    else:
                        verdict = verify(action, expectation, scene_after, margin=self.margin)
                        if verdict.ok:
                            outcome.scene = scene_after
                else:
                    verdict = verify(action, expectation, scene_after, margin=self.margin)

            record = AttemptRecord(task.id, attempt, reply, action, verdict)
            outcome.attempts.append(record)
            if action is not None:
                outcome.all_actions.append(action)
            outcome.verify_events.append(record.to_dict())
            if verdict.ok:
                final = action
                break

        if final is None:
            final = AgentAction(
                ActionKind.CLARIFY,
                text=(
                    f"unable to complete '{task.objective_text}' "
                    f"after {attempts_used} attempts"
                ),
                subtask_id=task.id,
                attempt=attempts_used,
                escalated=True,
            )
            task.advance(SubtaskStatus.FAILED)
            self._record_final(outcome, task, final, attempts=attempts_used, resolved=resolved)
            return

        refs = resolved
        if answer is not None and isinstance(answer.value, (list, tuple)):
            refs = tuple(dict.fromkeys(list(resolved) + list(answer.value)))
        if refs and final.kind in (ActionKind.RESPOND, ActionKind.POINT, ActionKind.WORLD_EVENT):
            final = replace(final, entity_refs=tuple(dict.fromkeys(final.entity_refs + refs)))
        task.advance(SubtaskStatus.DONE)
        if final.kind is ActionKind.RESPOND:
            outcome.answers[task.id] = final.text
        self._record_final(outcome, task, final, attempts=attempts_used, resolved=resolved)
        outcome.thoughts.append(f"SUBTASK {task.objective_text} -> {task.status.value}")

    def _derive_expectation(
        self,
        intent: Intent,
        percept: Percept,
        memory: MemoryState,
        scene: SceneWorld,
    ) -> tuple[Expectation | None, tuple[str, ...], Answer | None]:
        if intent.verb is Verb.POINT:
            target = resolve_single(intent.target, memory, percept, scene, margin=self.margin)
            exp = Expectation(ExpectationKind.ENTITY_RESOLVED, entity_id=target)
            return exp, (target,), None
        if intent.verb is Verb.DESCRIBE:
            target = resolve_single(intent.target, memory, percept, scene, margin=self.margin)
            exp = Expectation(ExpectationKind.ACTION_KIND, action_kind=ActionKind.RESPOND)
            return exp, (target,), None
        if intent.verb is Verb.MOVE:
            subject = resolve_single(intent.target, memory, percept, scene, margin=self.margin)
            anchor = resolve_single(intent.object2, memory, percept, scene, margin=self.margin)
            exp = Expectation(
                ExpectationKind.RELATION_AFTER,
                relation=intent.relation,
                a=subject,
                b=anchor,
            )
            return exp, (subject, anchor), None
        if intent.verb in (Verb.COUNT, Verb.QUERY_RELATION, Verb.QUERY_WHAT):
            answer = reason(intent, percept, memory, scene, margin=self.margin)
            exp = Expectation(ExpectationKind.ANSWER_EQUALS, value=answer.canonical_text())
            return exp, answer.resolved, answer
        return None, (), None

    def _record_final(
        self,
        outcome: ExecutionOutcome,
        task: Subtask,
        action: AgentAction,
        *,
        attempts: int,
        resolved: tuple[str, ...] = (),
    ) -> None:
        outcome.final_actions.append(action)
        if attempts == 0:
            outcome.all_actions.append(action)
        elif action.escalated:
            outcome.all_actions.append(action)
        outcome.subtask_results.append(
            SubtaskResult(
                subtask_id=task.id,
                objective_text=task.objective_text,
                status=task.status,
                attempts=attempts,
                resolved_ids=resolved if task.status is SubtaskStatus.DONE else (),
                answer_text=outcome.answers.get(task.id),
                escalated=action.escalated,
                final_kind=action.kind,
            )
        )
        if task.status is SubtaskStatus.FAILED:
            outcome.thoughts.append(f"SUBTASK {task.objective_text} -> failed")

    def _append_summary(self, outcome: ExecutionOutcome) -> None:
        """Trailing Respond recapping the turn.

        Failed steps are summarized only as a count so the recap never
        repeats a description that nothing in the scene matches.
        """
        parts: list[str] = []
        refs: list[str] = []
        failed = 0
        for result in outcome.subtask_results:
            if result.status is not SubtaskStatus.DONE:
                failed += 1
                continue
            if result.final_kind is ActionKind.CLARIFY:
                parts.append("asked for clarification")
                continue
            if result.answer_text is not None:
                parts.append(f"{result.objective_text}: {result.answer_text}")
            else:
                parts.append(f"done {result.objective_text}")
            refs.extend(result.resolved_ids)
        if failed:
            verb = "need" if failed != 1 else "needs"
            parts.append(f"{failed} step{'s' if failed != 1 else ''} {verb} clarification")
        summary = AgentAction(
            ActionKind.RESPOND,
            text="; ".join(parts) if parts else "nothing to do",
            subtask_id="summary",
            entity_refs=tuple(dict.fromkeys(refs)),
        )
        outcome.final_actions.append(summary)
        outcome.all_actions.append(summary)
