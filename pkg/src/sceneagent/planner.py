"""Instruction parsing, reference resolution, reasoning, and planning.

The clause grammar (case-insensitive) is:

    command := clause {(" and " | " then ") clause}
    clause  := "point to " desc | "describe " desc | "count " desc
             | "move " desc " to " rel " " desc
             | "is " desc " " rel " " desc
             | "what is " rel " " desc
    rel     := "left of" | "right of" | "above" | "below"
             | "inside" | "containing"
    desc    := ["the "] {attr " "} category | "it" | "that one"

Anything outside the grammar becomes a clarify intent, never an exception.
Parsed intents re-serialize to a canonical form the grammar accepts again.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Sequence

from .backend import CompletionParams, ModelBackend, Phase, PromptBundle, SYSTEM_TEMPLATES
from .errors import DepthExceeded, UnresolvedReference
from .memory import MemoryState
from .perception import Percept
from .world import (
    DEFAULT_MARGIN,
    EntityQuery,
    SceneWorld,
    SpatialRelation,
    relation_holds,
)

MAX_QUERY_DEPTH = 3

_WORD_RE = re.compile(r"^[a-z0-9]+$")


@dataclass(frozen=True)
class Instruction:
    raw: str
    turn: int

    def __post_init__(self) -> None:
        if not self.raw.strip():
            raise ValueError("instruction text must be non-empty")
        if self.turn < 1:
            raise ValueError("turn numbers start at 1")


class Verb(str, Enum):
    POINT = "point"
    DESCRIBE = "describe"
    COUNT = "count"
    MOVE = "move"
    QUERY_RELATION = "query_relation"
    QUERY_WHAT = "query_what"
    CLARIFY_NEEDED = "clarify_needed"


@dataclass(frozen=True)
class RelationRef:
    """A surface relation: world relation plus operand order.

    "inside" is Contains with the operands swapped; every other surface form
    maps straight through.
    """

    rel: SpatialRelation
    reversed: bool = False

    def operands(self, a: str, b: str) -> tuple[str, str]:
        return (b, a) if self.reversed else (a, b)

    def holds_between(
        self, a: str, b: str, scene: SceneWorld, *, margin: float = DEFAULT_MARGIN
    ) -> bool:
        subj, obj = self.operands(a, b)
        return relation_holds(self.rel, subj, obj, scene, margin=margin)

    def fact_line(self, a: str, b: str) -> str:
        subj, obj = self.operands(a, b)
        return f"REL {self.rel.value} {subj} {obj}"

    def surface(self) -> str:
        return _REF_TO_SURFACE[self]


_SURFACE_RELATIONS: list[tuple[str, RelationRef]] = [
    ("left of", RelationRef(SpatialRelation.LEFT_OF)),
    ("right of", RelationRef(SpatialRelation.RIGHT_OF)),
    ("containing", RelationRef(SpatialRelation.CONTAINS)),
    ("inside", RelationRef(SpatialRelation.CONTAINS, reversed=True)),
    ("above", RelationRef(SpatialRelation.ABOVE)),
    ("below", RelationRef(SpatialRelation.BELOW)),
]
_REF_TO_SURFACE = {ref: surface for surface, ref in _SURFACE_RELATIONS}

MARKERS = ("it", "that one")


@dataclass(frozen=True)
class TargetSpec:
    """What an intent is about: a description, a reference marker, or a
    description constrained by a relation to another target (programmatic
    nesting used by the reasoner; the surface grammar stays flat)."""

    marker: str | None = None
    query: EntityQuery | None = None
    relation: RelationRef | None = None
    anchor: "TargetSpec | None" = None

    def depth(self) -> int:
        return 1 + (self.anchor.depth() if self.anchor is not None else 0)

    def surface(self) -> str:
        if self.marker is not None:
            return self.marker
        assert self.query is not None
        words = list(self.query.values) + [self.query.category or "thing"]
        return "the " + " ".join(words)


def description(category: str, *values: str) -> TargetSpec:
    return TargetSpec(query=EntityQuery(category=category, values=tuple(values)))


@dataclass(frozen=True)
class Intent:
    verb: Verb
    target: TargetSpec | None = None
    relation: RelationRef | None = None
    object2: TargetSpec | None = None
    sequential: bool = False
    note: str = ""

    def canonical(self) -> str:
        if self.verb is Verb.POINT:
            return f"point to {self.target.surface()}"
        if self.verb is Verb.DESCRIBE:
            return f"describe {self.target.surface()}"
        if self.verb is Verb.COUNT:
            return f"count {self.target.surface()}"
        if self.verb is Verb.MOVE:
            return (
                f"move {self.target.surface()} to "
                f"{self.relation.surface()} {self.object2.surface()}"
            )
        if self.verb is Verb.QUERY_RELATION:
            return (
                f"is {self.target.surface()} "
                f"{self.relation.surface()} {self.object2.surface()}"
            )
        if self.verb is Verb.QUERY_WHAT:
            return f"what is {self.relation.surface()} {self.object2.surface()}"
        return self.note or "clarify"


def _parse_desc(text: str) -> TargetSpec | None:
    text = text.strip()
    if text in MARKERS:
        return TargetSpec(marker=text)
    tokens = text.split()
    if tokens and tokens[0] == "the":
        tokens = tokens[1:]
    if not tokens or not all(_WORD_RE.match(t) for t in tokens):
        return None
    *values, category = tokens
    return TargetSpec(query=EntityQuery(category=category, values=tuple(values)))


def _split_on_relation(text: str) -> tuple[str, RelationRef, str] | None:
    for surface, ref in _SURFACE_RELATIONS:
        sep = f" {surface} "
        idx = text.find(sep)
        if idx >= 0:
            return text[:idx], ref, text[idx + len(sep) :]
    return None


def _leading_relation(text: str) -> tuple[RelationRef, str] | None:
    for surface, ref in _SURFACE_RELATIONS:
        if text.startswith(surface + " "):
            return ref, text[len(surface) + 1 :]
    return None


def _parse_clause(text: str) -> Intent | None:
    text = text.strip()
    if text.startswith("point to "):
        desc = _parse_desc(text[len("point to ") :])
        return Intent(Verb.POINT, target=desc) if desc else None
    if text.startswith("describe "):
        desc = _parse_desc(text[len("describe ") :])
        return Intent(Verb.DESCRIBE, target=desc) if desc else None
    if text.startswith("count "):
        desc = _parse_desc(text[len("count ") :])
        return Intent(Verb.COUNT, target=desc) if desc else None
    if text.startswith("what is "):
        lead = _leading_relation(text[len("what is ") :])
        if lead is None:
            return None
        ref, rest = lead
        desc = _parse_desc(rest)
        return Intent(Verb.QUERY_WHAT, relation=ref, object2=desc) if desc else None
    if text.startswith("move "):
        rest = text[len("move ") :]
        if " to " not in rest:
            return None
        subject_text, tail = rest.split(" to ", 1)
        lead = _leading_relation(tail)
        if lead is None:
            return None
        ref, anchor_text = lead
        subject = _parse_desc(subject_text)
        anchor = _parse_desc(anchor_text)
        if subject is None or anchor is None:
            return None
        return Intent(Verb.MOVE, target=subject, relation=ref, object2=anchor)
    if text.startswith("is "):
        split = _split_on_relation(text[len("is ") :])
        if split is None:
            return None
        subject_text, ref, object_text = split
        subject = _parse_desc(subject_text)
        obj = _parse_desc(object_text)
        if subject is None or obj is None:
            return None
        return Intent(Verb.QUERY_RELATION, target=subject, relation=ref, object2=obj)
    return None


def clarify_intent(raw: str) -> Intent:
    return Intent(Verb.CLARIFY_NEEDED, note=f"could not interpret: {raw}")


def parse_instruction(
    instruction: Instruction,
    mode: str = "grammar",
    backend: ModelBackend | None = None,
    params: CompletionParams | None = None,
) -> list[Intent]:
    """Split an instruction into intents; unparseable input clarifies."""
    if mode == "backend":
        if backend is None:
            raise ValueError("backend mode requires a backend")
        bundle = PromptBundle(
            system=SYSTEM_TEMPLATES[Phase.PARSE],
            context="",
            percept="",
            instruction=instruction.raw,
            phase=Phase.PARSE,
        )
        reply = backend.complete(bundle, params or CompletionParams())
        intents: list[Intent] = []
        for line in reply.splitlines():
            line = line.strip()
            if not line:
                continue
            parsed = _parse_command(line.lower())
            if parsed is None:
                return [clarify_intent(instruction.raw)]
            intents.extend(parsed)
        return intents or [clarify_intent(instruction.raw)]
    if mode != "grammar":
        raise ValueError(f"unknown parser mode {mode!r}")
    parsed = _parse_command(instruction.raw.strip().lower())
    return parsed if parsed is not None else [clarify_intent(instruction.raw)]


def _parse_command(text: str) -> list[Intent] | None:
    parts = re.split(r"\s+(and|then)\s+", text)
    intents: list[Intent] = []
    for i in range(0, len(parts), 2):
        intent = _parse_clause(parts[i])
        if intent is None:
            return None
        if i > 0 and parts[i - 1] == "then":
            intent = replace(intent, sequential=True)
        intents.append(intent)
    return intents


def resolve_reference(
    target: TargetSpec,
    memory: MemoryState,
    percept: Percept,
    scene: SceneWorld,
) -> str:
    """Pick the focused entity a mention refers to.

    Candidates are focused entities matching the mention's constraints;
    the winner has the highest-salience memory entry, breaking ties by most
    recent access and then id. No candidate raises UnresolvedReference.
    """
    candidates: list[str] = []
    for eid in percept.focused:
        ent = scene.get(eid)
        if ent is None or not ent.visible:
            continue
        if target.query is not None and not target.query.matches(ent):
            continue
        candidates.append(eid)
    if not candidates:
        raise UnresolvedReference(f"cannot resolve '{target.surface()}'")

    def rank(eid: str) -> tuple[float, float, str]:
        entries = memory.entries_for(eid)
        salience = max((e.salience for e in entries), default=-1.0)
        recency = max((e.last_accessed for e in entries), default=-1)
        return (-salience, -float(recency), eid)

    return min(candidates, key=rank)


def resolve_target_ids(
    target: TargetSpec,
    memory: MemoryState,
    percept: Percept,
    scene: SceneWorld,
    *,
    margin: float = DEFAULT_MARGIN,
    max_depth: int = MAX_QUERY_DEPTH,
    _depth: int = 1,
) -> list[str]:
    """All visible ids satisfying a (possibly nested) target, sorted."""
    if _depth > max_depth:
        raise DepthExceeded(f"query nesting exceeds {max_depth}")
    if target.marker is not None:
        return [resolve_reference(target, memory, percept, scene)]
    ids = [
        e.id
        for e in scene.visible_entities()
        if target.query is None or target.query.matches(e)
    ]
    if target.relation is not None and target.anchor is not None:
        anchors = resolve_target_ids(
            target.anchor,
            memory,
            percept,
            scene,
            margin=margin,
            max_depth=max_depth,
            _depth=_depth + 1,
        )
        ids = [
            x
            for x in ids
            if any(
                x != a and target.relation.holds_between(x, a, scene, margin=margin)
                for a in anchors
            )
        ]
    return sorted(ids)


def resolve_single(
    target: TargetSpec,
    memory: MemoryState,
    percept: Percept,
    scene: SceneWorld,
    *,
    margin: float = DEFAULT_MARGIN,
) -> str:
    """One entity for a target: unique match, or salience disambiguation."""
    if target.marker is not None:
        return resolve_reference(target, memory, percept, scene)
    ids = resolve_target_ids(target, memory, percept, scene, margin=margin)
    if len(ids) == 1:
        return ids[0]
    if not ids:
        raise UnresolvedReference(f"no visible entity matches '{target.surface()}'")
    try:
        return resolve_reference(target, memory, percept, scene)
    except UnresolvedReference:
        raise UnresolvedReference(
            f"'{target.surface()}' is ambiguous between {', '.join(ids)}"
        ) from None


@dataclass(frozen=True)
class Answer:
    value: Any
    derivation: tuple[str, ...] = ()
    resolved: tuple[str, ...] = ()

    def canonical_text(self) -> str:
        if isinstance(self.value, bool):
            return "yes" if self.value else "no"
        if isinstance(self.value, int):
            return str(self.value)
        if isinstance(self.value, (list, tuple)):
            return " ".join(self.value) if self.value else "none"
        return str(self.value)


def reason(
    intent: Intent,
    percept: Percept,
    memory: MemoryState,
    scene: SceneWorld,
    *,
    margin: float = DEFAULT_MARGIN,
    max_depth: int = MAX_QUERY_DEPTH,
) -> Answer:
    """Ground-truth answer for a question intent, with its derivation chain."""
    if intent.verb is Verb.QUERY_RELATION:
        assert intent.target is not None and intent.object2 is not None
        assert intent.relation is not None
        a = resolve_single(intent.target, memory, percept, scene, margin=margin)
        b = resolve_single(intent.object2, memory, percept, scene, margin=margin)
        value = intent.relation.holds_between(a, b, scene, margin=margin)
        line = intent.relation.fact_line(a, b)
        return Answer(value, (line,) if value else ("NO" + line,), resolved=(a, b))
    if intent.verb is Verb.QUERY_WHAT:
        assert intent.relation is not None and intent.object2 is not None
        b = resolve_single(intent.object2, memory, percept, scene, margin=margin)
        members = []
        for ent in scene.visible_entities():
            if ent.id == b:
                continue
            if intent.target is not None and intent.target.query is not None:
                if not intent.target.query.matches(ent):
                    continue
            if intent.relation.holds_between(ent.id, b, scene, margin=margin):
                members.append(ent.id)
        members.sort()
        return Answer(
            members,
            tuple(intent.relation.fact_line(m, b) for m in members),
            resolved=(b,),
        )
    if intent.verb is Verb.COUNT:
        assert intent.target is not None
        ids = resolve_target_ids(
            intent.target, memory, percept, scene, margin=margin, max_depth=max_depth
        )
        derivation = (f"MATCH {' '.join(ids)}",) if ids else ("MATCH none",)
        return Answer(len(ids), derivation, resolved=tuple(ids))
    raise ValueError(f"intent verb {intent.verb.value} is not a question")


class SubtaskStatus(str, Enum):
    PENDING = "pending"
    ACTIVE = "active"
    DONE = "done"
    FAILED = "failed"


_VALID_TRANSITIONS = {
    (SubtaskStatus.PENDING, SubtaskStatus.ACTIVE),
    (SubtaskStatus.ACTIVE, SubtaskStatus.DONE),
    (SubtaskStatus.ACTIVE, SubtaskStatus.FAILED),
}


@dataclass
class Subtask:
    id: str
    objective: Intent | None
    objective_text: str
    required_percepts: tuple[EntityQuery, ...] = ()
    depends_on: tuple[str, ...] = ()
    status: SubtaskStatus = SubtaskStatus.PENDING

    def advance(self, status: SubtaskStatus) -> None:
        if (self.status, status) not in _VALID_TRANSITIONS:
            raise ValueError(f"invalid transition {self.status.value} -> {status.value}")
        self.status = status


@dataclass(frozen=True)
class Plan:
    subtasks: tuple[Subtask, ...]
    goal: str


def order_subtasks(subtasks: Sequence[Subtask]) -> list[Subtask]:
    """Dependency-respecting order, stable in the original order otherwise."""
    index = {task.id: i for i, task in enumerate(subtasks)}
    for task in subtasks:
        for dep in task.depends_on:
            if dep not in index:
                raise ValueError(f"subtask {task.id} depends on unknown {dep}")
    remaining = {task.id: set(task.depends_on) for task in subtasks}
    ordered: list[Subtask] = []
    done: set[str] = set()
    while remaining:
        ready = [tid for tid, deps in remaining.items() if deps <= done]
        if not ready:
            raise ValueError("dependency cycle among subtasks")
        # one at a time: a newly unblocked task with a lower creation index
        # outranks an older ready one
        tid = min(ready, key=lambda t: index[t])
        ordered.append(subtasks[index[tid]])
        done.add(tid)
        del remaining[tid]
    return ordered


def _percept_queries(intent: Intent) -> tuple[EntityQuery, ...]:
    queries: list[EntityQuery] = []
    for spec in (intent.target, intent.object2):
        node = spec
        while node is not None:
            if node.query is not None:
                queries.append(node.query)
            node = node.anchor
    return tuple(queries)


def make_plan(
    intents: Sequence[Intent],
    percept: Percept | None = None,
    memory: MemoryState | None = None,
) -> Plan:
    """One subtask per intent; "then" chains become dependencies."""
    subtasks: list[Subtask] = []
    for i, intent in enumerate(intents):
        deps: tuple[str, ...] = ()
        if intent.sequential and i > 0:
            deps = (f"s{i}",)
        subtasks.append(
            Subtask(
                id=f"s{i + 1}",
                objective=intent,
                objective_text=intent.canonical(),
                required_percepts=_percept_queries(intent),
                depends_on=deps,
            )
        )
    ordered = order_subtasks(subtasks)
    goal = " ; ".join(t.objective_text for t in ordered)
    return Plan(subtasks=tuple(ordered), goal=goal)


def passthrough_plan(raw: str) -> Plan:
    """Planner-ablation plan: the raw instruction as a single subtask."""
    task = Subtask(id="s1", objective=None, objective_text=raw.strip().lower())
    return Plan(subtasks=(task,), goal=task.objective_text)
