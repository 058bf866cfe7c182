"""A backend that answers from the live world instead of a model.

Useful for interactive chat and the web console: every reply is computed
from the session's actual scene and memory, so the agent behaves perfectly
without network access. The benchmark does not use this class; scripted
rules keep those runs self-contained.
"""

from __future__ import annotations

from typing import Callable

from .backend import CompletionParams, ModelBackend, Phase, PromptBundle
from .errors import AgentError
from .perception import Percept
from .planner import (
    Intent,
    RelationRef,
    Verb,
    _parse_command,
    reason,
    resolve_single,
)
from .world import BBox, DEFAULT_MARGIN, SceneWorld, SpatialRelation


def place_for_relation(
    scene: SceneWorld,
    subject_id: str,
    anchor_id: str,
    relation: RelationRef,
    *,
    margin: float = DEFAULT_MARGIN,
) -> BBox | None:
    """A bounding box for the subject that satisfies relation vs the anchor.

    Tries growing center offsets along the relation's axis and returns the
    first in-bounds box that actually verifies; None when no placement fits
    (anchor at the edge, subject too large for containment).
    """
    subject = scene.get(subject_id)
    anchor = scene.get(anchor_id)
    if subject is None or anchor is None:
        return None
    sw, sh = subject.bbox.w, subject.bbox.h
    ax, ay = anchor.bbox.center

    world_rel = relation.rel
    # The subject plays relation's first operand; reversed means the stored
    # world relation wants (anchor, subject), i.e. "inside" keeps the subject
    # within the anchor.
    if world_rel is SpatialRelation.CONTAINS:
        if relation.reversed:
            if sw >= anchor.bbox.w or sh >= anchor.bbox.h:
                return None
            bbox = BBox(ax - sw / 2.0, ay - sh / 2.0, sw, sh)
            return bbox if _check(scene, subject_id, anchor_id, relation, bbox, margin) else None
        return None  # growing the subject around the anchor is not a move

    for offset in (margin + 0.1, margin + 0.15, margin + 0.2, margin + 0.3):
        cx, cy = ax, ay
        if world_rel is SpatialRelation.LEFT_OF:
            cx = ax - offset
        elif world_rel is SpatialRelation.RIGHT_OF:
            cx = ax + offset
        elif world_rel is SpatialRelation.ABOVE:
            cy = ay - offset
        elif world_rel is SpatialRelation.BELOW:
            cy = ay + offset
        else:
            return None
        x = min(max(cx - sw / 2.0, 0.0), 1.0 - sw)
        y = min(max(cy - sh / 2.0, 0.0), 1.0 - sh)
        bbox = BBox(round(x, 3), round(y, 3), sw, sh)
        if _check(scene, subject_id, anchor_id, relation, bbox, margin):
            return bbox
    return None


def _check(
    scene: SceneWorld,
    subject_id: str,
    anchor_id: str,
    relation: RelationRef,
    bbox: BBox,
    margin: float,
) -> bool:
    from .world import WorldEvent, apply_event

    try:
        trial = apply_event(scene, WorldEvent.move(subject_id, bbox))
        return relation.holds_between(subject_id, anchor_id, trial, margin=margin)
    except AgentError:
        return False


class GroundTruthBackend(ModelBackend):
    """Computes correct directives from the session it is bound to.

    The provider is a zero-argument callable returning the live session;
    binding happens after construction because the session itself needs a
    backend first.
    """

    def __init__(self, session_provider: Callable[[], object] | None = None) -> None:
        self._provider = session_provider

    def bind(self, session_provider: Callable[[], object]) -> None:
        self._provider = session_provider

    def complete(self, bundle: PromptBundle, params: CompletionParams) -> str:
        if self._provider is None:
            return "ACT ASK no session bound"
        session = self._provider()
        if bundle.phase is Phase.PARSE:
            return bundle.instruction
        parsed = _parse_command(bundle.instruction.strip().lower())
        if not parsed:
            return "ACT ASK unable"
        intent = parsed[0]
        scene: SceneWorld = session.scene  # type: ignore[attr-defined]
        memory = session.memory  # type: ignore[attr-defined]
        margin = session.config.margin  # type: ignore[attr-defined]
        percept = Percept(
            focused=tuple(bundle.focus_ids()),
            tool_outputs=(),
            facts=(),
            rendered_text=bundle.percept,
            scene_revision=scene.revision,
        )
        try:
            return self._reply(intent, percept, memory, scene, margin)
        except AgentError as exc:
            return f"ACT ASK {exc}"

    def _reply(
        self,
        intent: Intent,
        percept: Percept,
        memory,
        scene: SceneWorld,
        margin: float,
    ) -> str:
        if intent.verb is Verb.POINT:
            eid = resolve_single(intent.target, memory, percept, scene, margin=margin)
            return f"ACT POINT {eid}"
        if intent.verb is Verb.DESCRIBE:
            eid = resolve_single(intent.target, memory, percept, scene, margin=margin)
            ent = scene.require(eid)
            attrs = " ".join(ent.attributes[k] for k in sorted(ent.attributes))
            left = "left" if ent.bbox.center[0] < 0.5 else "right"
            top = "upper" if ent.bbox.center[1] < 0.5 else "lower"
            desc = f"{attrs} {ent.category}".strip()
            return f"ACT SAY a {desc} in the {top} {left} area"
        if intent.verb in (Verb.COUNT, Verb.QUERY_RELATION, Verb.QUERY_WHAT):
            answer = reason(intent, percept, memory, scene, margin=margin)
            return f"ACT SAY {answer.canonical_text()}"
        if intent.verb is Verb.MOVE:
            subject = resolve_single(intent.target, memory, percept, scene, margin=margin)
            anchor = resolve_single(intent.object2, memory, percept, scene, margin=margin)
            bbox = place_for_relation(scene, subject, anchor, intent.relation, margin=margin)
            if bbox is None:
                return f"ACT ASK no room to move {subject} as requested"
            return f"ACT MOVE {subject} {bbox.x:.3f} {bbox.y:.3f} {bbox.w:.3f} {bbox.h:.3f}"
        return "ACT ASK unable"
