"""Scenario files: scripted dialogues with per-turn checks.

A scenario bundles an initial scene, the turn script (events + instruction +
checks + gold annotations), and the scripted backend rules that realize it,
so a benchmark suite is fully self-contained on disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

from ..backend import ScriptedRule
from ..errors import ScenarioFormatError
from ..world import SceneWorld, WorldEvent


class Dimension(str, Enum):
    VISUAL_ENTITY_TRACKING = "visual_entity_tracking"
    DIALOGUE_CONSISTENCY = "dialogue_consistency"
    REASONING_DEPTH = "reasoning_depth"
    INSTRUCTION_ADHERENCE = "instruction_adherence"
    ERROR_SUPPRESSION = "error_suppression"
    RESPONSE_FLUENCY = "response_fluency"


class CheckKind(str, Enum):
    RESOLVE_ENTITY = "resolve_entity"
    ANSWER_EQUALS = "answer_equals"
    ACTION_SEQUENCE = "action_sequence"
    RELATION_AFTER = "relation_after"
    NO_HALLUCINATION = "no_hallucination"
    CONSISTENCY_PAIR = "consistency_pair"


# Which dimensions a given automated check is allowed to score. Fluency has
# no automated check at all; it stays a human-judgment column.
CHECK_DIMENSIONS: dict[CheckKind, frozenset[Dimension]] = {
    CheckKind.RESOLVE_ENTITY: frozenset({Dimension.VISUAL_ENTITY_TRACKING}),
    CheckKind.ANSWER_EQUALS: frozenset(
        {
            Dimension.REASONING_DEPTH,
            Dimension.INSTRUCTION_ADHERENCE,
            Dimension.DIALOGUE_CONSISTENCY,
        }
    ),
    CheckKind.ACTION_SEQUENCE: frozenset({Dimension.INSTRUCTION_ADHERENCE}),
    CheckKind.RELATION_AFTER: frozenset(
        {Dimension.INSTRUCTION_ADHERENCE, Dimension.VISUAL_ENTITY_TRACKING}
    ),
    CheckKind.NO_HALLUCINATION: frozenset({Dimension.ERROR_SUPPRESSION}),
    CheckKind.CONSISTENCY_PAIR: frozenset({Dimension.DIALOGUE_CONSISTENCY}),
}

SCOREABLE_DIMENSIONS = tuple(d for d in Dimension if d is not Dimension.RESPONSE_FLUENCY)


@dataclass(frozen=True)
class Check:
    dimension: Dimension
    kind: CheckKind
    expected: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        allowed = CHECK_DIMENSIONS[self.kind]
        if self.dimension not in allowed:
            raise ScenarioFormatError(
                f"check kind {self.kind.value} cannot score {self.dimension.value}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "dimension": self.dimension.value,
            "kind": self.kind.value,
            "expected": dict(self.expected),
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "Check":
        try:
            return cls(
                dimension=Dimension(raw["dimension"]),
                kind=CheckKind(raw["kind"]),
                expected=dict(raw.get("expected", {})),
            )
        except (KeyError, ValueError) as exc:
            raise ScenarioFormatError(f"bad check: {exc}") from exc


@dataclass
class ScenarioTurn:
    instruction: str
    events: list[WorldEvent] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    annotated_intents: list[str] = field(default_factory=list)
    gold: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "instruction": self.instruction,
            "events": [e.to_dict() for e in self.events],
            "checks": [c.to_dict() for c in self.checks],
            "annotated_intents": list(self.annotated_intents),
            "gold": dict(self.gold),
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ScenarioTurn":
        instruction = str(raw.get("instruction", "")).strip()
        if not instruction:
            raise ScenarioFormatError("turn without instruction")
        return cls(
            instruction=instruction,
            events=[WorldEvent.from_dict(e) for e in raw.get("events", [])],
            checks=[Check.from_dict(c) for c in raw.get("checks", [])],
            annotated_intents=[str(i) for i in raw.get("annotated_intents", [])],
            gold=dict(raw.get("gold", {})),
        )


@dataclass
class Scenario:
    id: str
    scene: SceneWorld
    turns: list[ScenarioTurn]
    tags: list[str] = field(default_factory=list)
    script: list[ScriptedRule] = field(default_factory=list)
    title: str = ""

    def checks_count(self) -> int:
        return sum(len(t.checks) for t in self.turns)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "title": self.title,
            "tags": list(self.tags),
            "scene": self.scene.to_dict(),
            "script": [r.to_dict() for r in self.script],
            "turns": [t.to_dict() for t in self.turns],
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "Scenario":
        try:
            scenario = cls(
                id=str(raw["id"]),
                scene=SceneWorld.from_dict(raw["scene"]),
                turns=[ScenarioTurn.from_dict(t) for t in raw.get("turns", [])],
                tags=[str(t) for t in raw.get("tags", [])],
                script=[ScriptedRule.from_dict(r) for r in raw.get("script", [])],
                title=str(raw.get("title", "")),
            )
        except ScenarioFormatError:
            raise
        except Exception as exc:
            raise ScenarioFormatError(f"bad scenario: {exc}") from exc
        validate_scenario(scenario)
        return scenario


def validate_scenario(scenario: Scenario) -> None:
    if not scenario.id:
        raise ScenarioFormatError("scenario id must be non-empty")
    if not 1 <= len(scenario.turns) <= 12:
        raise ScenarioFormatError(
            f"scenario {scenario.id} has {len(scenario.turns)} turns; expected 1..12"
        )
    for i, turn in enumerate(scenario.turns, start=1):
        for check in turn.checks:
            if check.kind is CheckKind.CONSISTENCY_PAIR:
                ref = int(check.expected.get("turn", 0))
                if not 1 <= ref < i:
                    raise ScenarioFormatError(
                        f"scenario {scenario.id} turn {i}: consistency pair must "
                        f"reference an earlier turn, got {ref}"
                    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioFormatError(f"cannot read scenario {path}: {exc}") from exc
    return Scenario.from_dict(raw)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    path = Path(path)
    path.write_text(canonical_json(scenario.to_dict()) + "\n")


def load_suite(directory: str | Path) -> list[Scenario]:
    directory = Path(directory)
    scenarios = [load_scenario(p) for p in sorted(directory.glob("*.json"))]
    if not scenarios:
        raise ScenarioFormatError(f"no scenario files in {directory}")
    return scenarios


def canonical_json(obj: Any) -> str:
    """Stable serialization used for every artifact that must byte-compare."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
