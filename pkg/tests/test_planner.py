"""Command grammar, reference resolution, reasoning, plan ordering."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sceneagent.errors import DepthExceeded, SelfRelation, UnresolvedReference
from sceneagent.memory import MemoryEntry, MemoryState, EntryKind
from sceneagent.perception import Percept
from sceneagent.planner import (
    Instruction,
    Intent,
    Plan,
    RelationRef,
    Subtask,
    TargetSpec,
    Verb,
    description,
    make_plan,
    order_subtasks,
    parse_instruction,
    passthrough_plan,
    reason,
    resolve_reference,
    resolve_single,
    resolve_target_ids,
)
from sceneagent.world import EntityQuery, SpatialRelation

from conftest import make_entity, make_scene
from oracles import reference_topo_order


def parse(text: str):
    return parse_instruction(Instruction(raw=text, turn=1))


def fake_percept(*focus: str) -> Percept:
    return Percept(
        focused=tuple(focus), tool_outputs=(), facts=(), rendered_text="", scene_revision=0
    )


def mention(eid: str, salience: float, accessed: int, entry_id: str) -> MemoryEntry:
    return MemoryEntry(
        id=entry_id,
        kind=EntryKind.ENTITY_MENTION,
        content=f"entity {eid}",
        entity_refs=(eid,),
        turn_created=accessed,
        last_accessed=accessed,
        salience=salience,
    )


class TestGrammar:
    def test_point(self):
        (intent,) = parse("point to the red ball")
        assert intent.verb is Verb.POINT
        assert intent.target.query.category == "ball"
        assert intent.target.query.values == ("red",)

    def test_article_optional(self):
        (intent,) = parse("point to red ball")
        assert intent.target.query.category == "ball"
        assert intent.target.query.values == ("red",)

    def test_case_insensitive(self):
        (intent,) = parse("Point TO the RED Ball")
        assert intent.verb is Verb.POINT
        assert intent.target.query.values == ("red",)

    def test_markers(self):
        (intent,) = parse("point to it")
        assert intent.target.marker == "it"
        (intent,) = parse("describe that one")
        assert intent.verb is Verb.DESCRIBE
        assert intent.target.marker == "that one"

    def test_count(self):
        (intent,) = parse("count the balls")
        assert intent.verb is Verb.COUNT
        assert intent.target.query.category == "balls"

    def test_move(self):
        (intent,) = parse("move the red ball to below the box")
        assert intent.verb is Verb.MOVE
        assert intent.relation.rel is SpatialRelation.BELOW
        assert not intent.relation.reversed
        assert intent.object2.query.category == "box"

    def test_relation_query(self):
        (intent,) = parse("is the ball left of the cup")
        assert intent.verb is Verb.QUERY_RELATION
        assert intent.relation.rel is SpatialRelation.LEFT_OF

    def test_inside_reverses_contains(self):
        (intent,) = parse("is the ball inside the box")
        assert intent.relation.rel is SpatialRelation.CONTAINS
        assert intent.relation.reversed
        assert intent.relation.operands("a", "b") == ("b", "a")

    def test_containing_is_straight_contains(self):
        (intent,) = parse("is the box containing the ball")
        assert intent.relation.rel is SpatialRelation.CONTAINS
        assert not intent.relation.reversed

    def test_what_is(self):
        (intent,) = parse("what is left of the cup")
        assert intent.verb is Verb.QUERY_WHAT
        assert intent.target is None
        assert intent.object2.query.category == "cup"

    def test_and_joins_parallel_clauses(self):
        intents = parse("point to the ball and count the cups")
        assert [i.verb for i in intents] == [Verb.POINT, Verb.COUNT]
        assert not intents[0].sequential and not intents[1].sequential

    def test_then_marks_sequential(self):
        intents = parse("describe the cup then point to the box")
        assert intents[1].sequential and not intents[0].sequential

    def test_mixed_joiners(self):
        intents = parse("point to the ball and count the cups then describe the box")
        assert [i.sequential for i in intents] == [False, False, True]

    def test_one_bad_clause_spoils_the_whole_command(self):
        intents = parse("point to the ball and flarb the cup")
        assert len(intents) == 1
        assert intents[0].verb is Verb.CLARIFY_NEEDED

    def test_punctuation_not_tolerated(self):
        (intent,) = parse("point to the ball.")
        assert intent.verb is Verb.CLARIFY_NEEDED

    def test_free_text_clarifies(self):
        (intent,) = parse("please grab whatever looks fun")
        assert intent.verb is Verb.CLARIFY_NEEDED

    def test_multi_word_attributes(self):
        (intent,) = parse("point to the big red ball")
        assert intent.target.query.values == ("big", "red")


intent_strategy = st.builds(
    lambda verb, cat, values, rel, cat2, values2: _build_intent(
        verb, cat, values, rel, cat2, values2
    ),
    st.sampled_from([Verb.POINT, Verb.DESCRIBE, Verb.COUNT, Verb.MOVE, Verb.QUERY_RELATION, Verb.QUERY_WHAT]),
    st.sampled_from(["ball", "cup", "box", "book", "lamp"]),
    st.lists(st.sampled_from(["red", "blue", "big", "small"]), max_size=2, unique=True),
    st.sampled_from(
        [
            RelationRef(SpatialRelation.LEFT_OF),
            RelationRef(SpatialRelation.RIGHT_OF),
            RelationRef(SpatialRelation.ABOVE),
            RelationRef(SpatialRelation.BELOW),
            RelationRef(SpatialRelation.CONTAINS),
            RelationRef(SpatialRelation.CONTAINS, reversed=True),
        ]
    ),
    st.sampled_from(["ball", "cup", "box"]),
    st.lists(st.sampled_from(["green", "tall"]), max_size=1),
)


def _build_intent(verb, cat, values, rel, cat2, values2) -> Intent:
    target = description(cat, *values)
    obj2 = description(cat2, *values2)
    if verb in (Verb.POINT, Verb.DESCRIBE, Verb.COUNT):
        return Intent(verb, target=target)
    if verb is Verb.QUERY_WHAT:
        return Intent(verb, relation=rel, object2=obj2)
    return Intent(verb, target=target, relation=rel, object2=obj2)


class TestCanonicalRoundTrip:
    @given(intent_strategy)
    @settings(max_examples=300)
    def test_parse_of_canonical_is_identity(self, intent: Intent):
        parsed = parse(intent.canonical())
        assert len(parsed) == 1
        assert parsed[0] == intent

    @given(st.lists(intent_strategy, min_size=2, max_size=3), st.booleans())
    @settings(max_examples=100)
    def test_joined_clauses_round_trip(self, intents, use_then):
        joiner = " then " if use_then else " and "
        text = joiner.join(i.canonical() for i in intents)
        parsed = parse(text)
        assert [p.verb for p in parsed] == [i.verb for i in intents]
        if use_then:
            assert all(p.sequential for p in parsed[1:])


class TestResolution:
    def scene(self):
        return make_scene(
            make_entity("e1", "ball", (0.10, 0.10, 0.10, 0.10), color="red"),
            make_entity("e2", "ball", (0.70, 0.10, 0.10, 0.10), color="blue"),
            make_entity("e3", "cup", (0.42, 0.42, 0.10, 0.10), color="green"),
            make_entity("e4", "box", (0.10, 0.55, 0.35, 0.35), color="yellow"),
            make_entity("e5", "book", (0.15, 0.60, 0.12, 0.10), color="white"),
        )

    def test_unique_description_resolves_scene_wide(self):
        # empty focus: explicit descriptions do not need attention
        eid = resolve_single(description("ball", "red"), MemoryState(), fake_percept(), self.scene())
        assert eid == "e1"

    def test_ambiguous_description_raises_with_candidates(self):
        with pytest.raises(UnresolvedReference) as err:
            resolve_single(description("ball"), MemoryState(), fake_percept(), self.scene())
        assert "e1" in str(err.value) and "e2" in str(err.value)

    def test_no_match_raises(self):
        with pytest.raises(UnresolvedReference):
            resolve_single(description("chair"), MemoryState(), fake_percept(), self.scene())

    def test_ambiguity_broken_by_focused_salience(self):
        memory = MemoryState()
        memory.short = [mention("e2", 0.9, 3, "m1"), mention("e1", 0.4, 2, "m2")]
        eid = resolve_single(
            description("ball"), memory, fake_percept("e1", "e2"), self.scene()
        )
        assert eid == "e2"

    def test_marker_resolution_prefers_salience_then_recency_then_id(self):
        scene = self.scene()
        memory = MemoryState()
        memory.short = [mention("e1", 0.5, 2, "m1"), mention("e2", 0.5, 4, "m2")]
        eid = resolve_reference(TargetSpec(marker="it"), memory, fake_percept("e1", "e2"), scene)
        assert eid == "e2"  # equal salience, newer access wins
        memory.short = [mention("e1", 0.5, 4, "m1"), mention("e2", 0.5, 4, "m2")]
        eid = resolve_reference(TargetSpec(marker="it"), memory, fake_percept("e1", "e2"), scene)
        assert eid == "e1"  # full tie falls back to id order

    def test_marker_without_candidates_raises(self):
        with pytest.raises(UnresolvedReference):
            resolve_reference(TargetSpec(marker="it"), MemoryState(), fake_percept(), self.scene())

    def test_marker_ignores_unfocused_entities(self):
        memory = MemoryState()
        memory.short = [mention("e1", 0.9, 3, "m1")]
        eid = resolve_reference(
            TargetSpec(marker="it"), memory, fake_percept("e3"), self.scene()
        )
        assert eid == "e3"

    def test_nested_relation_filter(self):
        # balls left of the cup: only e1 qualifies
        target = TargetSpec(
            query=EntityQuery(category="ball"),
            relation=RelationRef(SpatialRelation.LEFT_OF),
            anchor=description("cup"),
        )
        ids = resolve_target_ids(target, MemoryState(), fake_percept(), self.scene())
        assert ids == ["e1"]

    def test_depth_limit(self):
        target = description("ball")
        for _ in range(4):
            target = TargetSpec(
                query=target.query,
                relation=RelationRef(SpatialRelation.LEFT_OF),
                anchor=target,
            )
        with pytest.raises(DepthExceeded):
            resolve_target_ids(target, MemoryState(), fake_percept(), self.scene())

    def test_invisible_entities_do_not_resolve(self):
        scene = make_scene(
            make_entity("e1", "ball", visible=False),
            make_entity("e2", "cup", (0.5, 0.5, 0.1, 0.1)),
        )
        with pytest.raises(UnresolvedReference):
            resolve_single(description("ball"), MemoryState(), fake_percept(), scene)


class TestReason:
    def scene(self):
        return TestResolution.scene(self)

    def test_relation_query_true(self):
        (intent,) = parse("is the red ball left of the blue ball")
        answer = reason(intent, fake_percept(), MemoryState(), self.scene())
        assert answer.value is True
        assert answer.derivation == ("REL left_of e1 e2",) or answer.derivation == (
            f"REL {SpatialRelation.LEFT_OF.value} e1 e2",
        )
        assert answer.resolved == ("e1", "e2")
        assert answer.canonical_text() == "yes"

    def test_relation_query_false_keeps_derivation(self):
        (intent,) = parse("is the blue ball left of the red ball")
        answer = reason(intent, fake_percept(), MemoryState(), self.scene())
        assert answer.value is False
        assert answer.canonical_text() == "no"
        assert len(answer.derivation) == 1 and answer.derivation[0].startswith("NO")

    def test_count(self):
        (intent,) = parse("count the balls")
        answer = reason(intent, fake_percept(), MemoryState(), self.scene())
        assert answer.value == 2
        assert answer.canonical_text() == "2"
        assert answer.resolved == ("e1", "e2")

    def test_count_zero(self):
        (intent,) = parse("count the chairs")
        answer = reason(intent, fake_percept(), MemoryState(), self.scene())
        assert answer.value == 0
        assert answer.derivation == ("MATCH none",)

    def test_what_is_lists_sorted_and_excludes_anchor(self):
        (intent,) = parse("what is above the box")
        answer = reason(intent, fake_percept(), MemoryState(), self.scene())
        assert answer.value == sorted(answer.value)
        assert "e4" not in answer.value
        assert "e1" in answer.value  # the top-row ball sits above the box

    def test_self_relation_surfaces(self):
        (intent,) = parse("is it left of it")
        memory = MemoryState()
        memory.short = [mention("e1", 0.9, 1, "m1")]
        with pytest.raises(SelfRelation):
            reason(intent, fake_percept("e1"), memory, self.scene())

    def test_non_question_verb_rejected(self):
        (intent,) = parse("point to the red ball")
        with pytest.raises(ValueError):
            reason(intent, fake_percept(), MemoryState(), self.scene())

    def test_inside_query_uses_reversed_operands(self):
        (intent,) = parse("is the book inside the box")
        answer = reason(intent, fake_percept(), MemoryState(), self.scene())
        assert answer.value is True


def random_dag_tasks(rng: random.Random) -> list[Subtask]:
    n = rng.randint(1, 8)
    # deps only point to lower hidden ranks; creation order is shuffled
    hidden = list(range(n))
    rng.shuffle(hidden)
    tasks = []
    for i in range(n):
        earlier = [j for j in range(n) if hidden[j] < hidden[i]]
        deps = tuple(
            f"s{j + 1}" for j in earlier if rng.random() < 0.4
        )
        tasks.append(Subtask(id=f"s{i + 1}", objective=None, objective_text=f"task {i}", depends_on=deps))
    return tasks


class TestPlanOrdering:
    def test_matches_reference_sort_on_random_dags(self):
        rng = random.Random(77)
        for _ in range(500):
            tasks = random_dag_tasks(rng)
            got = [t.id for t in order_subtasks(tasks)]
            want = reference_topo_order(tasks)
            assert got == want

    def test_cycle_detected(self):
        tasks = [
            Subtask(id="s1", objective=None, objective_text="a", depends_on=("s2",)),
            Subtask(id="s2", objective=None, objective_text="b", depends_on=("s1",)),
        ]
        with pytest.raises(ValueError):
            order_subtasks(tasks)

    def test_unknown_dependency_detected(self):
        tasks = [Subtask(id="s1", objective=None, objective_text="a", depends_on=("s9",))]
        with pytest.raises(ValueError):
            order_subtasks(tasks)

    def test_newly_unblocked_low_index_outranks_waiting_root(self):
        tasks = [
            Subtask(id="s1", objective=None, objective_text="a"),
            Subtask(id="s2", objective=None, objective_text="b", depends_on=("s1",)),
            Subtask(id="s3", objective=None, objective_text="c"),
        ]
        assert [t.id for t in order_subtasks(tasks)] == ["s1", "s2", "s3"]


class TestMakePlan:
    def test_one_subtask_per_intent(self):
        intents = parse("point to the red ball and count the cups")
        plan = make_plan(intents)
        assert len(plan.subtasks) == 2
        assert plan.subtasks[0].objective_text == "point to the red ball"
        assert plan.subtasks[0].depends_on == ()
        assert plan.subtasks[1].depends_on == ()

    def test_then_chains_dependencies(self):
        intents = parse("describe the cup then point to the box")
        plan = make_plan(intents)
        assert plan.subtasks[1].depends_on == ("s1",)

    def test_goal_joins_objectives(self):
        intents = parse("describe the cup then point to the box")
        plan = make_plan(intents)
        assert plan.goal == "describe the cup ; point to the box"

    def test_required_percepts_cover_both_operands(self):
        intents = parse("move the red ball to below the box")
        plan = make_plan(intents)
        cats = sorted(q.category for q in plan.subtasks[0].required_percepts)
        assert cats == ["ball", "box"]

    def test_plan_order_is_always_topological(self):
        rng = random.Random(13)
        for _ in range(200):
            tasks = random_dag_tasks(rng)
            ordered = order_subtasks(tasks)
            seen = set()
            for task in ordered:
                assert set(task.depends_on) <= seen
                seen.add(task.id)

    def test_passthrough_plan_shape(self):
        plan = passthrough_plan("  Do The Thing  ")
        assert len(plan.subtasks) == 1
        assert plan.subtasks[0].objective is None
        assert plan.subtasks[0].objective_text == "do the thing"
