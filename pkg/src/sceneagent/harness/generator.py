"""Deterministic scenario generation for the benchmark suite.

Five archetypes target distinct failure modes:

  golden      mixed commands over a changing scene, 5-7 turns, with a
              repeat-question consistency pair in the longer variants
  memory      pronoun references whose antecedent sits 3+ turns back
  compound    multi-clause instructions joined by "and"/"then"
  perception  scripted replies that defer the entity choice to the focus
              line, so reply quality tracks attention quality
  detection   point-heavy turns that only pass while the detector confirms
              the chosen entity

Every scenario is built twice before it is accepted. A dry run against the
ground-truth backend freezes gold annotations and literal script replies;
a scripted re-run must then pass every check and raise no error flags.
Constraint misses (an unintended referent winning a pronoun, a blocked
move) resample with the next salt, so generation is reproducible end to
end from a single seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from ..agent_loop import Session, stable_seed
from ..backend import ScriptedRule
from ..config import AgentConfig
from ..errors import ScenarioFormatError
from ..executor import ActionKind, AgentAction
from ..oracle import GroundTruthBackend
from ..world import BBox, Entity, SceneWorld, SpatialRelation, WorldEvent
from .runner import run_scenario
from .scenario import (
    Check,
    CheckKind,
    Dimension,
    Scenario,
    ScenarioTurn,
    save_scenario,
    validate_scenario,
)
from .scoring import LEXICON_COLORS

DEFAULT_SUITE_SEED = 11
DEFAULT_MIX: tuple[tuple[str, int], ...] = (
    ("golden", 4),
    ("memory", 4),
    ("compound", 4),
    ("perception", 4),
    ("detection", 4),
)
_MAX_SALT = 25

# 3x2 grid of cell centers; neighbouring centers differ by well over the
# relation margin, so directional answers never sit on the boundary.
_CELL_X = (0.18, 0.50, 0.82)
_CELL_Y = (0.28, 0.72)


class _Retry(Exception):
    """Constraint miss; rebuild the scenario with the next salt."""


@dataclass
class _TurnPlan:
    instruction: str
    events: list[WorldEvent] = field(default_factory=list)
    checks: list[tuple[Any, ...]] = field(default_factory=list)
    # freeze point replies as "ACT POINT {id}" instead of a literal id
    template_point: bool = False


@dataclass
class _Blueprint:
    title: str
    tags: list[str]
    scene: SceneWorld
    plans: list[_TurnPlan]


def _build_scene(
    rng: random.Random, specs: Sequence[tuple[str, str, str, tuple[int, int]]]
) -> SceneWorld:
    entities = []
    for eid, color, category, (col, row) in specs:
        w = round(rng.uniform(0.08, 0.12), 3)
        h = round(rng.uniform(0.08, 0.12), 3)
        cx = _CELL_X[col] + round(rng.uniform(-0.015, 0.015), 3)
        cy = _CELL_Y[row] + round(rng.uniform(-0.015, 0.015), 3)
        bbox = BBox(round(cx - w / 2.0, 3), round(cy - h / 2.0, 3), w, h)
        entities.append(Entity(eid, category, bbox, {"color": color}))
    return SceneWorld(tuple(entities))


def _golden(rng: random.Random, index: int) -> _Blueprint:
    n_turns = (7, 6, 5, 7)[index % 4]
    ball1, cup, ball2, box, book, lamp = rng.sample(LEXICON_COLORS, 6)
    scene = _build_scene(
        rng,
        [
            ("e1", ball1, "ball", (0, 0)),
            ("e2", cup, "cup", (1, 0)),
            ("e3", ball2, "ball", (2, 0)),
            ("e4", box, "box", (0, 1)),
            ("e5", book, "book", (1, 1)),
            ("e6", lamp, "lamp", (2, 1)),
        ],
    )
    lamp_box = scene.require("e6").bbox
    drift = BBox(
        round(lamp_box.x - 0.01, 3), round(lamp_box.y + 0.01, 3), lamp_box.w, lamp_box.h
    )
    plans = [
        _TurnPlan(
            f"point to the {ball1} ball",
            checks=[("resolve", "e1", None), ("action_seq", ["point"]), ("no_halluc",)],
        ),
        _TurnPlan(
            f"describe the {cup} cup",
            checks=[("action_seq", ["respond"]), ("no_halluc",)],
        ),
        _TurnPlan("count the balls", checks=[("answer", 0, Dimension.REASONING_DEPTH)]),
        _TurnPlan(
            f"is the {box} box left of the {book} book",
            checks=[("answer", 0, Dimension.REASONING_DEPTH)],
        ),
        _TurnPlan(
            f"move the {ball2} ball to below the {box} box",
            events=[WorldEvent.move("e6", drift)],
            checks=[
                ("action_seq", ["world_event"]),
                ("relation_after", SpatialRelation.BELOW, "e3", "e4"),
            ],
        ),
        _TurnPlan(
            f"is the {box} box left of the {book} book",
            checks=[("answer", 0, Dimension.DIALOGUE_CONSISTENCY), ("consistency", 4)],
        ),
        # by now the box has been referenced on turns 4, 5 and 6, so it owns
        # the pronoun
        _TurnPlan(
            "point to it",
            checks=[("resolve", "e4", None), ("action_seq", ["point"]), ("no_halluc",)],
        ),
    ]
    return _Blueprint(
        "Mixed commands over a changing scene",
        ["golden", f"turns{n_turns}"],
        scene,
        plans[:n_turns],
    )


def _memory(rng: random.Random, index: int) -> _Blueprint:
    ball, cup, box, book, lamp = rng.sample(LEXICON_COLORS, 5)
    scene = _build_scene(
        rng,
        [
            ("e1", ball, "ball", (0, 0)),
            ("e2", cup, "cup", (1, 0)),
            ("e3", lamp, "lamp", (2, 0)),
            ("e4", book, "book", (0, 1)),
            ("e5", box, "box", (1, 1)),
        ],
    )
    # the ball is mentioned on turns 1-3 only; both pronoun turns sit >= 3
    # turns past that antecedent
    plans = [
        _TurnPlan(
            f"point to the {ball} ball",
            checks=[("resolve", "e1", None), ("action_seq", ["point"]), ("no_halluc",)],
        ),
        _TurnPlan(
            f"describe the {ball} ball",
            checks=[("action_seq", ["respond"]), ("no_halluc",)],
        ),
        _TurnPlan(f"point to the {ball} ball", checks=[("resolve", "e1", None)]),
        _TurnPlan(
            f"count the {cup} cups", checks=[("answer", 0, Dimension.REASONING_DEPTH)]
        ),
        _TurnPlan(
            f"is the {book} book left of the {box} box",
            checks=[("answer", 0, Dimension.REASONING_DEPTH)],
        ),
        _TurnPlan(
            "point to it",
            checks=[("resolve", "e1", 3), ("action_seq", ["point"]), ("no_halluc",)],
        ),
        _TurnPlan(
            f"is it above the {box} box",
            checks=[("answer", 0, Dimension.REASONING_DEPTH), ("resolve", "e1", 3)],
        ),
    ]
    return _Blueprint("Pronoun chains with long gaps", ["memory"], scene, plans)


def _compound(rng: random.Random, index: int) -> _Blueprint:
    ball, cup, box, book, lamp = rng.sample(LEXICON_COLORS, 5)
    scene = _build_scene(
        rng,
        [
            ("e1", ball, "ball", (0, 0)),
            ("e2", cup, "cup", (1, 0)),
            ("e3", box, "box", (2, 0)),
            ("e4", book, "book", (0, 1)),
            ("e5", lamp, "lamp", (1, 1)),
        ],
    )
    plans = [
        _TurnPlan(
            f"point to the {ball} ball and count the cups",
            checks=[
                ("resolve", "e1", None),
                ("action_seq", ["point", "respond"]),
                ("answer", 0, Dimension.INSTRUCTION_ADHERENCE),
            ],
        ),
        _TurnPlan(
            f"describe the {cup} cup then point to the {box} box",
            checks=[("action_seq", ["respond", "point"]), ("resolve", "e3", None)],
        ),
        _TurnPlan(
            "count the books",
            events=[WorldEvent.set_state("e5", "power", "on")],
            checks=[("answer", 0, Dimension.REASONING_DEPTH)],
        ),
        _TurnPlan(
            f"move the {ball} ball to below the {cup} cup"
            f" and is the {book} book left of the {lamp} lamp",
            checks=[
                ("action_seq", ["world_event", "respond"]),
                ("relation_after", SpatialRelation.BELOW, "e1", "e2"),
                ("answer", 0, Dimension.INSTRUCTION_ADHERENCE),
            ],
        ),
        _TurnPlan(
            f"point to the {lamp} lamp",
            checks=[("resolve", "e5", None), ("action_seq", ["point"]), ("no_halluc",)],
        ),
    ]
    return _Blueprint("Multi-clause commands", ["compound"], scene, plans)


def _perception(rng: random.Random, index: int) -> _Blueprint:
    lamp, ball, cup, box, book = rng.sample(LEXICON_COLORS, 5)
    # e1 is a filler that is never a point target: when attention is
    # disabled the focus dump starts at the lowest id, so the {id} template
    # then points at the wrong entity by construction
    scene = _build_scene(
        rng,
        [
            ("e1", lamp, "lamp", (0, 0)),
            ("e2", ball, "ball", (1, 0)),
            ("e3", cup, "cup", (2, 0)),
            ("e4", box, "box", (0, 1)),
            ("e5", book, "book", (1, 1)),
        ],
    )
    plans = [
        _TurnPlan(
            f"point to the {ball} ball",
            template_point=True,
            checks=[("resolve", "e2", None), ("action_seq", ["point"]), ("no_halluc",)],
        ),
        _TurnPlan(
            f"point to the {cup} cup",
            template_point=True,
            checks=[("resolve", "e3", None), ("action_seq", ["point"])],
        ),
        _TurnPlan("count the lamps", checks=[("answer", 0, Dimension.REASONING_DEPTH)]),
        _TurnPlan(
            f"point to the {box} box",
            template_point=True,
            checks=[("resolve", "e4", None), ("action_seq", ["point"])],
        ),
        _TurnPlan(
            f"is the {book} book left of the {ball} ball",
            checks=[("answer", 0, Dimension.REASONING_DEPTH), ("no_halluc",)],
        ),
    ]
    return _Blueprint("Focus-driven pointing", ["perception"], scene, plans)


def _detection(rng: random.Random, index: int) -> _Blueprint:
    ball, cup, box, book, lamp = rng.sample(LEXICON_COLORS, 5)
    scene = _build_scene(
        rng,
        [
            ("e1", ball, "ball", (0, 0)),
            ("e2", cup, "cup", (1, 0)),
            ("e3", box, "box", (2, 0)),
            ("e4", book, "book", (0, 1)),
            ("e5", lamp, "lamp", (1, 1)),
        ],
    )
    plans = [
        _TurnPlan(
            f"point to the {ball} ball",
            checks=[("resolve", "e1", None), ("action_seq", ["point"])],
        ),
        _TurnPlan(
            f"point to the {cup} cup",
            checks=[("resolve", "e2", None), ("action_seq", ["point"])],
        ),
        _TurnPlan("count the boxes", checks=[("answer", 0, Dimension.REASONING_DEPTH)]),
        _TurnPlan(
            f"point to the {box} box",
            checks=[("resolve", "e3", None), ("action_seq", ["point"])],
        ),
        _TurnPlan(
            f"point to the {book} book",
            checks=[("resolve", "e4", None), ("action_seq", ["point"]), ("no_halluc",)],
        ),
    ]
    return _Blueprint("Detector-confirmed pointing", ["detection"], scene, plans)


_BUILDERS: dict[str, Callable[[random.Random, int], _Blueprint]] = {
    "golden": _golden,
    "memory": _memory,
    "compound": _compound,
    "perception": _perception,
    "detection": _detection,
}

ARCHETYPES = tuple(sorted(_BUILDERS))


def _materialize(action: AgentAction) -> tuple[str, dict[str, Any]]:
    if action.kind is ActionKind.POINT:
        return (
            f"ACT POINT {action.entity_id}",
            {"kind": "point", "entity_id": action.entity_id},
        )
    if action.kind is ActionKind.RESPOND:
        return f"ACT SAY {action.text}", {"kind": "respond", "text": action.text}
    if action.kind is ActionKind.WORLD_EVENT and action.bbox is not None:
        vals = [round(v, 3) for v in action.bbox.as_list()]
        reply = f"ACT MOVE {action.entity_id} " + " ".join(f"{v:.3f}" for v in vals)
        return reply, {"kind": "move", "entity_id": action.entity_id, "bbox": vals}
    raise _Retry(f"cannot script a {action.kind.value} action")


def _freeze_check(spec: tuple[Any, ...], record: Any) -> Check:
    tag = spec[0]
    if tag == "resolve":
        eid, antecedent = spec[1], spec[2]
        if eid not in record.resolved_ids:
            raise _Retry(
                f"turn {record.turn}: wanted {eid} resolved, got {record.resolved_ids}"
            )
        expected: dict[str, Any] = {"entity_id": eid}
        if antecedent is not None:
            expected["antecedent_turn"] = antecedent
        return Check(Dimension.VISUAL_ENTITY_TRACKING, CheckKind.RESOLVE_ENTITY, expected)
    if tag == "answer":
        index, dimension = spec[1], spec[2]
        ordered = [
            record.answers[s["subtask_id"]]
            for s in record.subtask_results
            if s["subtask_id"] in record.answers
        ]
        if index >= len(ordered):
            raise _Retry(f"turn {record.turn}: no answer at index {index}")
        return Check(dimension, CheckKind.ANSWER_EQUALS, {"value": ordered[index]})
    if tag == "action_seq":
        kinds = [str(k) for k in spec[1]]
        actual = [a.kind.value for a in record.primary_actions]
        if actual != kinds:
            raise _Retry(f"turn {record.turn}: actions {actual}, wanted {kinds}")
        return Check(
            Dimension.INSTRUCTION_ADHERENCE, CheckKind.ACTION_SEQUENCE, {"kinds": kinds}
        )
    if tag == "relation_after":
        rel, a, b = spec[1], spec[2], spec[3]
        return Check(
            Dimension.INSTRUCTION_ADHERENCE,
            CheckKind.RELATION_AFTER,
            {"relation": rel.value, "a": a, "b": b},
        )
    if tag == "no_halluc":
        return Check(Dimension.ERROR_SUPPRESSION, CheckKind.NO_HALLUCINATION, {})
    if tag == "consistency":
        return Check(
            Dimension.DIALOGUE_CONSISTENCY, CheckKind.CONSISTENCY_PAIR, {"turn": spec[1]}
        )
    raise ValueError(f"unknown check spec {tag!r}")


def _freeze(blueprint: _Blueprint, scenario_id: str, config: AgentConfig) -> Scenario:
    backend = GroundTruthBackend()
    session = Session(blueprint.scene, config, backend, session_id="dry-run")
    backend.bind(lambda: session)
    records = [session.step(plan.instruction, plan.events) for plan in blueprint.plans]

    rules: dict[str, str] = {}
    turns: list[ScenarioTurn] = []
    for plan, record in zip(blueprint.plans, records):
        subs = {s["subtask_id"]: s for s in record.subtask_results}
        gold_actions: list[dict[str, Any]] = []
        for action in record.primary_actions:
            sub = subs.get(action.subtask_id, {})
            if sub.get("status") != "done":
                raise _Retry(
                    f"turn {record.turn}: subtask {action.subtask_id} ended "
                    f"{sub.get('status')!r}"
                )
            pattern = str(sub.get("objective", ""))
            if not pattern or any(ch in pattern for ch in "*?["):
                raise _Retry(f"turn {record.turn}: unusable pattern {pattern!r}")
            reply, gold_action = _materialize(action)
            if plan.template_point and action.kind is ActionKind.POINT:
                reply = "ACT POINT {id}"
            if rules.get(pattern, reply) != reply:
                raise _Retry(f"conflicting replies for {pattern!r}")
            rules.setdefault(pattern, reply)
            gold_actions.append(gold_action)
        turns.append(
            ScenarioTurn(
                instruction=plan.instruction,
                events=plan.events,
                checks=[_freeze_check(spec, record) for spec in plan.checks],
                annotated_intents=list(record.intents),
                gold={
                    "actions": gold_actions,
                    "resolved": list(record.resolved_ids),
                    "answers": dict(sorted(record.answers.items())),
                },
            )
        )

    scenario = Scenario(
        id=scenario_id,
        scene=blueprint.scene,
        turns=turns,
        tags=list(blueprint.tags),
        script=[ScriptedRule(pattern, reply) for pattern, reply in rules.items()],
        title=blueprint.title,
    )
    validate_scenario(scenario)
    return scenario


def _validated(scenario: Scenario, config: AgentConfig) -> Scenario:
    run = run_scenario(scenario, config, "full")
    if run.report.error:
        raise _Retry(f"scripted run error: {run.report.error}")
    for result in run.report.check_results:
        if not result.passed:
            raise _Retry(f"scripted run failed a check: {result.to_dict()}")
    flagged = [flags for flags in run.report.turn_flags if flags]
    if flagged:
        raise _Retry(f"scripted run raised error flags: {flagged}")
    return scenario


def generate_scenario(
    archetype: str,
    index: int = 0,
    seed: int = DEFAULT_SUITE_SEED,
    config: AgentConfig | None = None,
) -> Scenario:
    builder = _BUILDERS.get(archetype)
    if builder is None:
        raise ScenarioFormatError(
            f"unknown archetype {archetype!r}; expected one of {', '.join(ARCHETYPES)}"
        )
    config = config or AgentConfig()
    last = ""
    for salt in range(_MAX_SALT):
        rng = random.Random(stable_seed(seed, archetype, index, salt))
        blueprint = builder(rng, index)
        try:
            return _validated(
                _freeze(blueprint, f"{archetype}{index + 1:02d}", config), config
            )
        except _Retry as exc:
            last = str(exc)
    raise ScenarioFormatError(
        f"could not generate {archetype}[{index}] after {_MAX_SALT} salts: {last}"
    )


def generate_suite(
    seed: int = DEFAULT_SUITE_SEED,
    mix: Sequence[tuple[str, int]] = DEFAULT_MIX,
    config: AgentConfig | None = None,
) -> list[Scenario]:
    return [
        generate_scenario(archetype, index, seed, config)
        for archetype, count in mix
        for index in range(count)
    ]


def save_suite(scenarios: Sequence[Scenario], directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for scenario in scenarios:
        path = directory / f"{scenario.id}.json"
        save_scenario(scenario, path)
        paths.append(path)
    return paths
