"""Attention, visual tools, and the rendered percept.

The percept is the model-facing view of the scene: a FOCUS line with the
attended entity ids, DET lines from tool detections (fixed 3-decimal
formatting), and REL lines for spatial facts among focused entities. The
rendered text is a pure function of the structured fields and parses back.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Sequence

from .config import AblationFlags
from .errors import InvalidRegion, UnknownTool
from .memory import MemoryState, tokenize
from .world import (
    BBox,
    DEFAULT_MARGIN,
    EntityQuery,
    SceneWorld,
    SpatialRelation,
    category_matches,
    relation_holds,
)

if TYPE_CHECKING:  # pragma: no cover - annotations only
    from .planner import Instruction

_DIRECTIONAL_ORDER = (
    SpatialRelation.LEFT_OF,
    SpatialRelation.RIGHT_OF,
    SpatialRelation.ABOVE,
    SpatialRelation.BELOW,
    SpatialRelation.CONTAINS,
    SpatialRelation.OVERLAPS,
)

DEFAULT_FOCUS = 5


class ToolCapability(str, Enum):
    DETECT = "detect"
    LOCATE = "locate"


@dataclass(frozen=True)
class NoiseProfile:
    """Detector degradation: miss probability plus corner jitter."""

    drop_prob: float = 0.0
    jitter: float = 0.0


@dataclass(frozen=True)
class VisualTool:
    name: str
    capability: ToolCapability = ToolCapability.DETECT
    noise: NoiseProfile | None = None


@dataclass(frozen=True)
class Detection:
    label: str
    bbox: BBox
    confidence: float
    entity_id: str | None = None

    def line(self) -> str:
        b = self.bbox
        return f"DET {self.label} {b.x:.3f} {b.y:.3f} {b.w:.3f} {b.h:.3f} {self.confidence:.3f}"


@dataclass(frozen=True)
class ToolOutput:
    tool_name: str
    detections: tuple[Detection, ...]
    scene_revision: int


@dataclass(frozen=True)
class RelationFact:
    rel: SpatialRelation
    a: str
    b: str

    def line(self) -> str:
        return f"REL {self.rel.value} {self.a} {self.b}"


@dataclass(frozen=True)
class Percept:
    focused: tuple[str, ...]
    tool_outputs: tuple[ToolOutput, ...]
    facts: tuple[RelationFact, ...]
    rendered_text: str
    scene_revision: int

    def detected_ids(self) -> set[str]:
        found: set[str] = set()
        for output in self.tool_outputs:
            for det in output.detections:
                if det.entity_id is not None:
                    found.add(det.entity_id)
        return found


class ToolRegistry:
    def __init__(self) -> None:
        self._tools: dict[str, VisualTool] = {}

    def register(self, tool: VisualTool) -> None:
        self._tools[tool.name] = tool

    def get(self, name: str) -> VisualTool:
        if name not in self._tools:
            raise UnknownTool(f"no tool named '{name}'")
        return self._tools[name]

    def names(self) -> list[str]:
        return sorted(self._tools)


def default_registry(noise: NoiseProfile | None = None) -> ToolRegistry:
    registry = ToolRegistry()
    registry.register(VisualTool(name="detector", capability=ToolCapability.DETECT, noise=noise))
    return registry


def attend(
    instruction_text: str,
    memory: MemoryState,
    scene: SceneWorld,
    *,
    n_focus: int = DEFAULT_FOCUS,
) -> list[str]:
    """Rank visible entities by relevance; keep the strictly-positive top n.

    Score: +2 per distinct instruction token matching the entity's category
    or an attribute value, +1 if a long-tier entry references the entity,
    plus the salience of its strongest memory entry.
    """
    tokens = set(tokenize(instruction_text))
    long_refs = memory.long_refs()
    scored: list[tuple[float, str]] = []
    for ent in scene.visible_entities():
        attr_values = {v.lower() for v in ent.attributes.values()}
        token_hits = sum(
            1 for tok in tokens if category_matches(tok, ent.category) or tok in attr_values
        )
        score = 2.0 * token_hits
        if ent.id in long_refs:
            score += 1.0
        entries = memory.entries_for(ent.id)
        if entries:
            score += max(e.salience for e in entries)
        if score > 0.0:
            scored.append((score, ent.id))
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [eid for _, eid in scored[:n_focus]]


def invoke_tool(
    tool: VisualTool,
    scene: SceneWorld,
    region: BBox | None = None,
    query: EntityQuery | None = None,
    rng: random.Random | None = None,
) -> ToolOutput:
    """Ground-truth detection over the scene, degraded by the tool's noise.

    With noise, each candidate is dropped with drop_prob and surviving boxes
    get their corners jittered uniformly within +/- jitter (clamped to keep a
    valid box); confidence reflects the miss rate.
    """
    if region is not None and not isinstance(region, BBox):
        raise InvalidRegion(f"region must be a bounding box, got {type(region).__name__}")
    candidates = [e for e in scene.visible_entities()]
    if query is not None:
        candidates = [e for e in candidates if query.matches(e)]
    if region is not None:
        candidates = [e for e in candidates if e.bbox.intersection_area(region) > 0.0]
    candidates.sort(key=lambda e: e.id)

    noise = tool.noise
    detections: list[Detection] = []
    if noise is None or (noise.drop_prob == 0.0 and noise.jitter == 0.0):
        for ent in candidates:
            detections.append(Detection(ent.category, ent.bbox, 1.0, ent.id))
    else:
        if rng is None:
            rng = random.Random(0)
        conf = round(max(0.0, 1.0 - noise.drop_prob), 3)
        for ent in candidates:
            if noise.drop_prob > 0.0 and rng.random() < noise.drop_prob:
                continue
            bbox = _jitter_box(ent.bbox, noise.jitter, rng)
            detections.append(Detection(ent.category, bbox, conf, ent.id))
    return ToolOutput(tool.name, tuple(detections), scene.revision)


def _jitter_box(bbox: BBox, jitter: float, rng: random.Random) -> BBox:
    if jitter <= 0.0:
        return bbox
    x1 = bbox.x + rng.uniform(-jitter, jitter)
    y1 = bbox.y + rng.uniform(-jitter, jitter)
    x2 = bbox.x + bbox.w + rng.uniform(-jitter, jitter)
    y2 = bbox.y + bbox.h + rng.uniform(-jitter, jitter)
    x1, x2 = sorted((min(max(x1, 0.0), 1.0), min(max(x2, 0.0), 1.0)))
    y1, y2 = sorted((min(max(y1, 0.0), 1.0), min(max(y2, 0.0), 1.0)))
    if x2 - x1 < 1e-3:
        x1 = max(0.0, min(x1, 1.0 - 1e-3))
        x2 = x1 + 1e-3
    if y2 - y1 < 1e-3:
        y1 = max(0.0, min(y1, 1.0 - 1e-3))
        y2 = y1 + 1e-3
    return BBox(x1, y1, x2 - x1, y2 - y1)


def relation_facts(
    scene: SceneWorld,
    focus_ids: Sequence[str],
    *,
    margin: float = DEFAULT_MARGIN,
) -> list[RelationFact]:
    """Every true (relation, a, b) over ordered pairs of focused entities."""
    facts: list[RelationFact] = []
    ordered = sorted(focus_ids)
    for a in ordered:
        for b in ordered:
            if a == b:
                continue
            for rel in _DIRECTIONAL_ORDER:
                if relation_holds(rel, a, b, scene, margin=margin):
                    facts.append(RelationFact(rel, a, b))
    return facts


def render_percept(
    focus_ids: Sequence[str],
    tool_outputs: Sequence[ToolOutput],
    facts: Sequence[RelationFact],
) -> str:
    lines = ["FOCUS " + " ".join(focus_ids) if focus_ids else "FOCUS"]
    for output in tool_outputs:
        for det in output.detections:
            lines.append(det.line())
    for fact in facts:
        lines.append(fact.line())
    return "\n".join(lines)


def parse_rendered(text: str) -> dict[str, object]:
    """Recover focus ids, detections, and facts from rendered percept text."""
    focus: list[str] = []
    detections: list[Detection] = []
    facts: list[RelationFact] = []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "FOCUS":
            focus = parts[1:]
        elif parts[0] == "DET" and len(parts) == 7:
            label = parts[1]
            x, y, w, h, conf = (float(p) for p in parts[2:7])
            detections.append(Detection(label, BBox(x, y, w, h), conf))
        elif parts[0] == "REL" and len(parts) == 4:
            facts.append(RelationFact(SpatialRelation(parts[1]), parts[2], parts[3]))
    return {"focus": focus, "detections": detections, "facts": facts}


def perceive(
    scene: SceneWorld,
    memory: MemoryState,
    instruction: "Instruction",
    tools: ToolRegistry | None,
    flags: AblationFlags,
    *,
    rng: random.Random | None = None,
    margin: float = DEFAULT_MARGIN,
    n_focus: int = DEFAULT_FOCUS,
) -> Percept:
    """Build the turn's percept honoring the ablation switches."""
    if flags.disable_perception:
        focus = sorted(e.id for e in scene.visible_entities())
    else:
        focus = attend(instruction.raw, memory, scene, n_focus=n_focus)

    outputs: list[ToolOutput] = []
    if not flags.disable_tools and tools is not None:
        detector = tools.get("detector")
        categories = sorted({scene.require(eid).category for eid in focus})
        for cat in categories:
            outputs.append(
                invoke_tool(detector, scene, query=EntityQuery(category=cat), rng=rng)
            )

    facts: list[RelationFact] = []
    if not flags.disable_perception:
        facts = relation_facts(scene, focus, margin=margin)

    rendered = render_percept(focus, outputs, facts)
    return Percept(
        focused=tuple(focus),
        tool_outputs=tuple(outputs),
        facts=tuple(facts),
        rendered_text=rendered,
        scene_revision=scene.revision,
    )
