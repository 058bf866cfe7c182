"""Scenario schema, scoring, classification, generator, and runner tests."""

import json
import random

import pytest
from conftest import make_entity, make_scene

from sceneagent.agent_loop import TurnRecord
from sceneagent.backend import ModelBackend, ScriptedRule
from sceneagent.config import AgentConfig
from sceneagent.errors import BackendFailure, ScenarioFormatError
from sceneagent.executor import ActionKind, AgentAction
from sceneagent.harness.generator import (
    ARCHETYPES,
    DEFAULT_MIX,
    DEFAULT_SUITE_SEED,
    generate_scenario,
    generate_suite,
    save_suite,
)
from sceneagent.harness.runner import (
    ABLATION_CONFIGS,
    DEFAULT_GRID,
    config_for,
    oracle_replay,
    run_scenario,
    run_suite,
    trace_lines,
    write_bench_artifacts,
    SuiteResult,
)
from sceneagent.harness.scenario import (
    Check,
    CheckKind,
    Dimension,
    Scenario,
    ScenarioTurn,
    canonical_json,
    load_scenario,
    load_suite,
    save_scenario,
    validate_scenario,
)
from sceneagent.harness.scoring import (
    BUCKETS,
    ERROR_TYPES,
    CheckResult,
    RunReport,
    aggregate_reports,
    bucket_of,
    classify_turn,
    evaluate_check,
    hallucinated_mentions,
    latency_stats,
    percentile,
    pool_buckets,
    pool_dimension_scores,
    pool_errors,
    render_bucket_table,
    render_error_table,
    render_latency_table,
    render_score_table,
)
from sceneagent.perception import NoiseProfile


def point(eid, **kw):
    return AgentAction(ActionKind.POINT, entity_id=eid, **kw)


def say(text, **kw):
    return AgentAction(ActionKind.RESPOND, text=text, **kw)


def record_of(turn, *, intents=(), resolved=(), answers=None, primary=(),
              extra=(), subtasks=(), instruction="x"):
    """Synthetic TurnRecord; extra actions join all_actions but not primary."""
    primary = list(primary)
    return TurnRecord(
        turn=turn,
        instruction=instruction,
        events=[],
        intents=list(intents),
        primary_actions=primary,
        summary_action=None,
        all_actions=primary + list(extra),
        answers=dict(answers or {}),
        subtask_results=list(subtasks),
        resolved_ids=list(resolved),
        focus=[],
        scene_revision_before=0,
        scene_revision_after=0,
    )


@pytest.fixture(scope="module")
def suite():
    return generate_suite()


@pytest.fixture(scope="module")
def small_suite(suite):
    # one golden + one detection scenario keeps runner tests fast
    return [suite[0], suite[16]]


class TestScenarioSchema:
    def test_check_rejects_mismatched_dimension(self):
        with pytest.raises(ScenarioFormatError):
            Check(Dimension.REASONING_DEPTH, CheckKind.RESOLVE_ENTITY, {"entity_id": "e1"})

    def test_answer_check_allows_three_dimensions(self):
        for dim in (Dimension.REASONING_DEPTH, Dimension.INSTRUCTION_ADHERENCE,
                    Dimension.DIALOGUE_CONSISTENCY):
            Check(dim, CheckKind.ANSWER_EQUALS, {"value": "2"})

    def test_fluency_is_never_checkable(self):
        for kind in CheckKind:
            with pytest.raises(ScenarioFormatError):
                Check(Dimension.RESPONSE_FLUENCY, kind, {})

    def test_turn_requires_instruction(self):
        with pytest.raises(ScenarioFormatError, match="instruction"):
            ScenarioTurn.from_dict({"instruction": "   "})

    def test_scenario_rejects_empty_id_and_bad_turn_counts(self):
        scene = make_scene(make_entity("e1"))
        turn = ScenarioTurn(instruction="point to the ball")
        with pytest.raises(ScenarioFormatError, match="id"):
            validate_scenario(Scenario(id="", scene=scene, turns=[turn]))
        with pytest.raises(ScenarioFormatError, match="turns"):
            validate_scenario(Scenario(id="s", scene=scene, turns=[]))
        with pytest.raises(ScenarioFormatError, match="turns"):
            validate_scenario(Scenario(id="s", scene=scene, turns=[turn] * 13))

    def test_consistency_pair_must_point_backwards(self):
        scene = make_scene(make_entity("e1"))
        check = Check(Dimension.DIALOGUE_CONSISTENCY, CheckKind.CONSISTENCY_PAIR,
                      {"turn": 1})
        bad = Scenario(id="s", scene=scene,
                       turns=[ScenarioTurn("count the balls", checks=[check])])
        with pytest.raises(ScenarioFormatError, match="earlier"):
            validate_scenario(bad)
        ok = Scenario(id="s", scene=scene,
                      turns=[ScenarioTurn("count the balls"),
                             ScenarioTurn("count the balls", checks=[check])])
        validate_scenario(ok)

    def test_round_trip_preserves_everything(self, suite):
        for scenario in suite[:5]:
            clone = Scenario.from_dict(scenario.to_dict())
            assert clone.to_dict() == scenario.to_dict()

    def test_file_round_trip(self, tmp_path, suite):
        path = tmp_path / "s.json"
        save_scenario(suite[0], path)
        assert load_scenario(path).to_dict() == suite[0].to_dict()

    def test_load_scenario_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ScenarioFormatError):
            load_scenario(path)

    def test_load_suite_empty_dir_raises(self, tmp_path):
        with pytest.raises(ScenarioFormatError):
            load_suite(tmp_path)

    def test_canonical_json_is_sorted_and_compact(self):
        text = canonical_json({"b": 1, "a": [1, 2]})
        assert text == '{"a":[1,2],"b":1}'


class TestHallucinationDetection:
    def scene(self):
        return make_scene(
            make_entity("e1", "ball", (0.1, 0.1, 0.1, 0.1), color="red"),
            make_entity("e2", "cup", (0.4, 0.4, 0.1, 0.1), color="green"),
            make_entity("e9", "box", (0.7, 0.7, 0.1, 0.1), color="blue", visible=False),
        )

    def test_ghost_point_is_flagged(self):
        rec = record_of(1, primary=[point("ghost99")])
        problems = hallucinated_mentions(rec, self.scene())
        assert problems == ["points at unknown ghost99"]

    def test_point_at_real_entity_is_clean(self):
        rec = record_of(1, primary=[point("e1")])
        assert hallucinated_mentions(rec, self.scene()) == []

    def test_point_at_invisible_entity_is_not_a_ghost(self):
        # the id exists in the scene even though perception cannot see it
        rec = record_of(1, primary=[point("e9")])
        assert hallucinated_mentions(rec, self.scene()) == []

    def test_absent_color_category_pair_is_flagged(self):
        rec = record_of(1, primary=[say("the purple ball is on the left")])
        assert hallucinated_mentions(rec, self.scene()) == ["mentions absent purple ball"]

    def test_invisible_entity_cannot_ground_a_mention(self):
        rec = record_of(1, primary=[say("next to the blue box")])
        assert hallucinated_mentions(rec, self.scene()) == ["mentions absent blue box"]

    def test_visible_pair_and_plural_form_are_clean(self):
        rec = record_of(1, primary=[say("I see a red ball and two green cups")])
        assert hallucinated_mentions(rec, self.scene()) == []

    def test_color_without_category_token_is_ignored(self):
        rec = record_of(1, primary=[say("a red herring near the door")])
        assert hallucinated_mentions(rec, self.scene()) == []

    def test_failed_attempts_are_scanned_too(self):
        rec = record_of(1, primary=[point("e1")], extra=[point("nope7")])
        assert hallucinated_mentions(rec, self.scene()) == ["points at unknown nope7"]


class TestEvaluateCheck:
    def scene(self):
        return make_scene(
            make_entity("e1", "ball", (0.10, 0.40, 0.10, 0.10), color="red"),
            make_entity("e2", "ball", (0.70, 0.40, 0.10, 0.10), color="blue"),
        )

    def run_one(self, check, rec, transcript=None):
        return evaluate_check(check, rec, self.scene(), transcript or [rec], margin=0.05)

    def test_resolve_entity(self):
        check = Check(Dimension.VISUAL_ENTITY_TRACKING, CheckKind.RESOLVE_ENTITY,
                      {"entity_id": "e1"})
        assert self.run_one(check, record_of(1, resolved=["e1", "e2"])).passed
        miss = self.run_one(check, record_of(1, resolved=["e2"]))
        assert not miss.passed and "expected e1" in miss.detail

    def test_answer_equals_normalizes(self):
        check = Check(Dimension.REASONING_DEPTH, CheckKind.ANSWER_EQUALS, {"value": "Yes"})
        assert self.run_one(check, record_of(1, answers={"s1": "  yes "})).passed
        assert not self.run_one(check, record_of(1, answers={"s1": "no"})).passed
        assert not self.run_one(check, record_of(1)).passed

    def test_action_sequence_is_exact(self):
        check = Check(Dimension.INSTRUCTION_ADHERENCE, CheckKind.ACTION_SEQUENCE,
                      {"kinds": ["point", "respond"]})
        good = record_of(1, primary=[point("e1"), say("hi")])
        assert self.run_one(check, good).passed
        assert not self.run_one(check, record_of(1, primary=[point("e1")])).passed
        extra = record_of(1, primary=[point("e1"), say("hi"), say("again")])
        assert not self.run_one(check, extra).passed

    def test_relation_after_inspects_scene(self):
        holds = Check(Dimension.INSTRUCTION_ADHERENCE, CheckKind.RELATION_AFTER,
                      {"relation": "left_of", "a": "e1", "b": "e2"})
        assert self.run_one(holds, record_of(1)).passed
        fails = Check(Dimension.INSTRUCTION_ADHERENCE, CheckKind.RELATION_AFTER,
                      {"relation": "right_of", "a": "e1", "b": "e2"})
        assert not self.run_one(fails, record_of(1)).passed

    def test_relation_after_survives_bad_operands(self):
        check = Check(Dimension.VISUAL_ENTITY_TRACKING, CheckKind.RELATION_AFTER,
                      {"relation": "left_of", "a": "e1", "b": "missing"})
        result = self.run_one(check, record_of(1))
        assert not result.passed and result.detail

    def test_no_hallucination(self):
        check = Check(Dimension.ERROR_SUPPRESSION, CheckKind.NO_HALLUCINATION, {})
        assert self.run_one(check, record_of(1, primary=[point("e1")])).passed
        bad = self.run_one(check, record_of(1, primary=[point("gone")]))
        assert not bad.passed and "unknown gone" in bad.detail

    def test_consistency_pair_compares_first_answers(self):
        check = Check(Dimension.DIALOGUE_CONSISTENCY, CheckKind.CONSISTENCY_PAIR,
                      {"turn": 1})
        earlier = record_of(1, answers={"s1": "2"})
        current = record_of(3, answers={"s1": " 2 "})
        assert evaluate_check(check, current, self.scene(), [earlier, record_of(2), current]).passed
        drifted = record_of(3, answers={"s1": "3"})
        result = evaluate_check(check, drifted, self.scene(), [earlier, record_of(2), drifted])
        assert not result.passed and "turn 1 said" in result.detail

    def test_consistency_pair_needs_answers_on_both_sides(self):
        check = Check(Dimension.DIALOGUE_CONSISTENCY, CheckKind.CONSISTENCY_PAIR,
                      {"turn": 1})
        silent = record_of(1)
        current = record_of(2, answers={"s1": "2"})
        assert not evaluate_check(check, current, self.scene(), [silent, current]).passed

    def test_consistency_pair_bad_reference_fails(self):
        check = Check(Dimension.DIALOGUE_CONSISTENCY, CheckKind.CONSISTENCY_PAIR,
                      {"turn": 9})
        rec = record_of(1, answers={"s1": "2"})
        result = evaluate_check(check, rec, self.scene(), [rec])
        assert not result.passed and "bad reference" in result.detail

    def test_result_serialization(self):
        check = Check(Dimension.VISUAL_ENTITY_TRACKING, CheckKind.RESOLVE_ENTITY,
                      {"entity_id": "e1"})
        out = self.run_one(check, record_of(4, resolved=["e1"])).to_dict()
        assert out == {"turn": 4, "dimension": "visual_entity_tracking",
                       "kind": "resolve_entity", "passed": True, "detail": ""}


class TestClassifyTurn:
    def scene(self):
        return make_scene(make_entity("e1", "ball", (0.1, 0.1, 0.1, 0.1), color="red"))

    def classify(self, rec, *, annotated=(), results=(), checks=()):
        return classify_turn(rec, list(annotated), self.scene(), list(results), list(checks))

    def failed_resolve(self, turn, antecedent=None):
        expected = {"entity_id": "e1"}
        if antecedent is not None:
            expected["antecedent_turn"] = antecedent
        check = Check(Dimension.VISUAL_ENTITY_TRACKING, CheckKind.RESOLVE_ENTITY, expected)
        result = CheckResult(turn, check.dimension, check.kind, False)
        return result, check

    def test_clean_turn_has_no_flags(self):
        assert self.classify(record_of(1, primary=[point("e1")])) == []

    def test_context_loss_needs_old_antecedent(self):
        res, chk = self.failed_resolve(5, antecedent=2)
        flags = self.classify(record_of(5), results=[res], checks=[chk])
        assert flags == ["context_loss"]

    def test_recent_antecedent_is_not_context_loss(self):
        res, chk = self.failed_resolve(4, antecedent=2)
        assert self.classify(record_of(4), results=[res], checks=[chk]) == []

    def test_unannotated_resolve_failure_is_not_context_loss(self):
        res, chk = self.failed_resolve(8, antecedent=None)
        assert self.classify(record_of(8), results=[res], checks=[chk]) == []

    def test_passed_resolve_never_flags(self):
        res, chk = self.failed_resolve(9, antecedent=1)
        res = CheckResult(res.turn, res.dimension, res.kind, True)
        assert self.classify(record_of(9), results=[res], checks=[chk]) == []

    def test_hallucination_flag(self):
        flags = self.classify(record_of(1, primary=[point("zz")]))
        assert flags == ["visual_hallucination"]

    def test_misinterpretation_requires_annotation(self):
        rec = record_of(1, intents=["point"])
        assert self.classify(rec, annotated=["count"]) == ["instruction_misinterpretation"]
        assert self.classify(rec, annotated=["point"]) == []
        assert self.classify(rec) == []

    def test_incomplete_execution(self):
        rec = record_of(1, subtasks=[{"id": "s1", "status": "failed"}])
        assert self.classify(rec) == ["incomplete_execution"]
        ok = record_of(1, subtasks=[{"id": "s1", "status": "done"}])
        assert self.classify(ok) == []

    def test_factual_error_needs_an_answer(self):
        check = Check(Dimension.REASONING_DEPTH, CheckKind.ANSWER_EQUALS, {"value": "2"})
        bad = CheckResult(1, check.dimension, check.kind, False)
        with_answer = record_of(1, answers={"s1": "3"})
        assert self.classify(with_answer, results=[bad], checks=[check]) == ["factual_error"]
        silent = record_of(1)
        assert self.classify(silent, results=[bad], checks=[check]) == []

    def test_each_flag_at_most_once(self):
        check = Check(Dimension.REASONING_DEPTH, CheckKind.ANSWER_EQUALS, {"value": "2"})
        bad = CheckResult(1, check.dimension, check.kind, False)
        rec = record_of(1, answers={"s1": "3", "s2": "4"},
                        primary=[point("zz"), point("yy")])
        flags = self.classify(rec, results=[bad, bad], checks=[check, check])
        assert flags == ["visual_hallucination", "factual_error"]

    def test_all_flags_can_stack_on_one_turn(self):
        res, chk = self.failed_resolve(6, antecedent=1)
        answer_chk = Check(Dimension.REASONING_DEPTH, CheckKind.ANSWER_EQUALS, {"value": "2"})
        answer_res = CheckResult(6, answer_chk.dimension, answer_chk.kind, False)
        rec = record_of(6, intents=["point"], answers={"s1": "9"},
                        primary=[point("zz")],
                        subtasks=[{"id": "s1", "status": "failed"}])
        flags = self.classify(rec, annotated=["count"],
                              results=[res, answer_res], checks=[chk, answer_chk])
        assert flags == list(ERROR_TYPES)


class TestRunReport:
    def seeded_report(self):
        report = RunReport(scenario_id="s", config_name="full")
        mk = lambda turn, dim, kind, passed: CheckResult(turn, dim, kind, passed)
        report.check_results = [
            mk(1, Dimension.VISUAL_ENTITY_TRACKING, CheckKind.RESOLVE_ENTITY, True),
            mk(2, Dimension.VISUAL_ENTITY_TRACKING, CheckKind.RESOLVE_ENTITY, False),
            mk(4, Dimension.REASONING_DEPTH, CheckKind.ANSWER_EQUALS, True),
            mk(7, Dimension.INSTRUCTION_ADHERENCE, CheckKind.ACTION_SEQUENCE, True),
            mk(8, Dimension.INSTRUCTION_ADHERENCE, CheckKind.ACTION_SEQUENCE, True),
        ]
        report.turn_flags = [[], ["context_loss"], [], ["context_loss", "factual_error"]]
        report.turn_count = 8
        return report

    def test_dimension_totals(self):
        totals = self.seeded_report().dimension_totals()
        assert totals[Dimension.VISUAL_ENTITY_TRACKING] == (1, 2)
        assert totals[Dimension.REASONING_DEPTH] == (1, 1)
        assert totals[Dimension.INSTRUCTION_ADHERENCE] == (2, 2)

    def test_bucket_totals_follow_turn_numbers(self):
        totals = self.seeded_report().bucket_totals()
        assert totals == {"1-3": (1, 2), "4-6": (1, 1), "7+": (2, 2)}

    def test_bucket_edges(self):
        assert [bucket_of(t) for t in (1, 3, 4, 6, 7, 11)] == \
            ["1-3", "1-3", "4-6", "4-6", "7+", "7+"]

    def test_error_counts(self):
        counts = self.seeded_report().error_counts()
        assert counts["context_loss"] == 2
        assert counts["factual_error"] == 1
        assert counts["visual_hallucination"] == 0

    def test_to_dict_shape(self):
        out = self.seeded_report().to_dict()
        assert out["scenario_id"] == "s" and out["config"] == "full"
        assert out["turns"] == 8
        assert out["dimensions"]["visual_entity_tracking"] == \
            {"passed": 1, "total": 2, "score": 0.5}
        assert out["dimensions"]["error_suppression"]["score"] is None
        assert out["buckets"]["7+"] == {"passed": 2, "total": 2}
        assert out["run_error"] == ""
        assert len(out["checks"]) == 5


class TestPooling:
    def report(self, sid, passed, total, turn=1, flags=(), error=""):
        rep = RunReport(scenario_id=sid, config_name="full")
        rep.check_results = [
            CheckResult(turn, Dimension.VISUAL_ENTITY_TRACKING,
                        CheckKind.RESOLVE_ENTITY, i < passed)
            for i in range(total)
        ]
        rep.turn_flags = [list(flags)]
        rep.turn_count = 1
        rep.error = error
        return rep

    def test_pool_dimension_scores_sums_counts(self):
        pooled = pool_dimension_scores([self.report("a", 1, 2), self.report("b", 2, 2)])
        cell = pooled["visual_entity_tracking"]
        assert cell == {"passed": 3, "total": 4, "score": 0.75, "mapped": 4.0}
        assert pooled["reasoning_depth"]["score"] is None
        assert pooled["response_fluency"]["note"] == "n/a (human-rated)"

    def test_mapped_score_is_affine(self):
        pooled = pool_dimension_scores([self.report("a", 1, 3)])
        cell = pooled["visual_entity_tracking"]
        assert cell["score"] == round(1 / 3, 6)
        assert cell["mapped"] == round(1 + 4 / 3, 6)

    def test_pool_buckets(self):
        pooled = pool_buckets([self.report("a", 1, 1, turn=2),
                               self.report("b", 0, 1, turn=9)])
        assert pooled["1-3"] == {"passed": 1, "total": 1, "score": 1.0}
        assert pooled["7+"] == {"passed": 0, "total": 1, "score": 0.0}
        assert pooled["4-6"]["score"] is None

    def test_pool_errors_rates(self):
        pooled = pool_errors([self.report("a", 1, 1, flags=["context_loss"]),
                              self.report("b", 1, 1)])
        assert pooled["turns"] == 2
        assert pooled["counts"]["context_loss"] == 1
        assert pooled["rates"]["context_loss"] == 0.5
        assert pooled["rates"]["factual_error"] == 0.0

    def test_aggregate_reports_lists_failed_runs(self):
        reports = [self.report("b", 1, 1, error="boom"),
                   self.report("a", 1, 1, error="bang"),
                   self.report("c", 1, 1)]
        agg = aggregate_reports(reports, "full")
        assert agg["config"] == "full"
        assert agg["scenarios"] == 3
        assert agg["failed_runs"] == ["a", "b"]


class TestLatency:
    def test_percentile_uses_ceiling_rank(self):
        values = list(range(1, 101))
        random.Random(1).shuffle(values)
        assert percentile(values, 0.95) == 95
        assert percentile(values, 1.0) == 100
        assert percentile([3.0, 1.0, 2.0], 0.5) == 2.0
        assert percentile([7.0], 0.99) == 7.0
        assert percentile([], 0.5) == 0.0

    def test_latency_stats_shape(self):
        rep = RunReport(scenario_id="s", config_name="full")
        rep.turn_durations_ms = [10.0, 20.0]
        rep.phase_durations_ms = {"plan": [1.0, 3.0], "execute": [5.0]}
        stats = latency_stats([rep])
        assert stats["per_turn"] == {"mean_ms": 15.0, "p95_ms": 20.0, "count": 2}
        assert stats["per_phase"]["plan"]["mean_ms"] == 2.0
        assert list(stats["per_phase"]) == ["execute", "plan"]

    def test_latency_stats_empty(self):
        stats = latency_stats([])
        assert stats["per_turn"]["count"] == 0
        assert stats["per_turn"]["mean_ms"] == 0.0

    def test_render_tables_smoke(self):
        rep = RunReport(scenario_id="s", config_name="full")
        rep.check_results = [CheckResult(1, Dimension.VISUAL_ENTITY_TRACKING,
                                         CheckKind.RESOLVE_ENTITY, True)]
        rep.turn_flags = [[]]
        rep.turn_count = 1
        rep.turn_durations_ms = [5.0]
        rep.phase_durations_ms = {"plan": [1.0]}
        aggregates = {"full": aggregate_reports([rep], "full")}
        score = render_score_table(aggregates)
        assert "full" in score and "1.00/5.00" in score and "n/a" in score
        bucket = render_bucket_table(aggregates)
        assert all(b in bucket for b in BUCKETS)
        errors = render_error_table(aggregates)
        assert "0 (0.000)" in errors
        latency = render_latency_table({"full": latency_stats([rep])})
        assert "per-turn" in latency and "plan" in latency


class TestGenerator:
    def test_suite_mix(self, suite):
        assert len(suite) == sum(count for _, count in DEFAULT_MIX)
        ids = [s.id for s in suite]
        assert len(set(ids)) == len(ids)
        for archetype, count in DEFAULT_MIX:
            tagged = [s for s in suite if archetype in s.tags]
            assert len(tagged) == count

    def test_every_scenario_is_well_formed(self, suite):
        for scenario in suite:
            validate_scenario(scenario)
            assert scenario.checks_count() >= 1
            assert scenario.script, scenario.id

    def test_generation_is_deterministic(self, suite):
        again = generate_suite(seed=DEFAULT_SUITE_SEED)
        assert [s.to_dict() for s in again] == [s.to_dict() for s in suite]

    def test_different_seed_changes_content(self, suite):
        other = generate_scenario(ARCHETYPES[0], 0, seed=DEFAULT_SUITE_SEED + 1)
        assert other.to_dict() != suite[0].to_dict()

    def test_unknown_archetype_raises(self):
        with pytest.raises(ScenarioFormatError, match="archetype"):
            generate_scenario("mystery", 0)

    def test_scripted_run_passes_every_check(self, suite):
        config = AgentConfig()
        for scenario in suite:
            run = run_scenario(scenario, config, "full")
            assert run.report.error == "", scenario.id
            failed = [r for r in run.report.check_results if not r.passed]
            assert not failed, (scenario.id, failed)
            assert all(not flags for flags in run.report.turn_flags), scenario.id

    def test_save_suite_round_trip(self, tmp_path, suite):
        paths = save_suite(suite[:3], tmp_path)
        assert len(paths) == 3
        loaded = load_suite(tmp_path)
        assert [s.to_dict() for s in loaded] == [s.to_dict() for s in suite[:3]]


class ExplodingBackend(ModelBackend):
    def complete(self, bundle, params):
        raise BackendFailure("socket closed")


class TestRunner:
    def test_config_for_known_names(self):
        base = AgentConfig()
        for name in DEFAULT_GRID:
            config = config_for(name, base)
            assert config.flags == ABLATION_CONFIGS[name]
        noisy = config_for("noisy_tools", base)
        assert noisy.flags == ABLATION_CONFIGS["full"]
        with pytest.raises(KeyError):
            config_for("turbo", base)

    def test_run_scenario_fills_transcript(self, small_suite):
        scenario = small_suite[0]
        run = run_scenario(scenario, AgentConfig(), "full")
        assert len(run.transcript) == len(scenario.turns)
        assert len(run.scenes_after) == len(scenario.turns)
        assert run.report.turn_count == len(scenario.turns)
        assert run.config_name == "full"

    def test_backend_failure_truncates_run(self, small_suite):
        scenario = small_suite[0]
        run = run_scenario(scenario, AgentConfig(), "full", backend=ExplodingBackend())
        assert run.report.error == "backend failure on turn 1: socket closed"
        assert run.transcript == []
        result = SuiteResult(runs={"full": [run]})
        assert result.any_failed()

    def test_run_suite_aggregates_per_config(self, small_suite):
        result = run_suite(small_suite, ("full", "no_memory"))
        assert set(result.runs) == {"full", "no_memory"}
        assert all(len(runs) == 2 for runs in result.runs.values())
        assert result.aggregates["full"]["scenarios"] == 2
        assert result.latency["full"]["per_turn"]["count"] > 0
        assert not result.any_failed()
        report = result.report_dict()
        assert set(report) == {"aggregates", "scenarios"}

    def test_run_suite_is_deterministic(self, small_suite):
        first = run_suite(small_suite, ("full",))
        second = run_suite(small_suite, ("full",))
        assert canonical_json(first.report_dict()) == canonical_json(second.report_dict())
        for a, b in zip(first.runs["full"], second.runs["full"]):
            assert trace_lines(a) == trace_lines(b)

    def test_trace_lines_are_canonical_and_timing_free(self, small_suite):
        run = run_scenario(small_suite[0], AgentConfig(), "full")
        lines = trace_lines(run).splitlines()
        assert lines
        seqs = []
        for line in lines:
            payload = json.loads(line)
            assert "duration_ms" not in payload
            seqs.append(payload["seq"])
        assert seqs == sorted(seqs)

    def test_write_bench_artifacts_layout(self, tmp_path, small_suite):
        result = run_suite(small_suite, ("full", "no_memory"))
        paths = write_bench_artifacts(result, tmp_path / "out")
        assert paths["report"].is_file() and paths["latency"].is_file()
        traces = sorted(p.name for p in paths["traces"].glob("*.jsonl"))
        expected = sorted(f"{s.id}__{c}.jsonl"
                          for s in small_suite for c in ("full", "no_memory"))
        assert traces == expected
        json.loads(paths["report"].read_text())
        json.loads(paths["latency"].read_text())

    def test_bench_artifacts_are_byte_identical_across_runs(self, tmp_path, small_suite):
        a = write_bench_artifacts(run_suite(small_suite, ("full",)), tmp_path / "a")
        b = write_bench_artifacts(run_suite(small_suite, ("full",)), tmp_path / "b")
        assert a["report"].read_bytes() == b["report"].read_bytes()
        for trace in a["traces"].glob("*.jsonl"):
            assert trace.read_bytes() == (b["traces"] / trace.name).read_bytes()

    def test_total_detector_noise_breaks_a_detection_scenario(self, small_suite):
        scenario = small_suite[1]
        assert "detection" in scenario.tags
        run = run_scenario(scenario, AgentConfig(), "full",
                           tool_noise=NoiseProfile(drop_prob=1.0, jitter=0.0))
        assert any(not r.passed for r in run.report.check_results)

    def test_oracle_replay_passes_generated_suite(self, suite):
        for scenario in suite:
            report = oracle_replay(scenario, margin=0.05)
            assert report.config_name == "oracle"
            assert report.error == ""
            assert all(r.passed for r in report.check_results), scenario.id
            assert all(not flags for flags in report.turn_flags), scenario.id
