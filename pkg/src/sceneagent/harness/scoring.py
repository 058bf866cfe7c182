"""Check evaluation, error classification, and report assembly.

Scores are pass ratios per dimension (optionally mapped onto a 1-5 scale as
1 + 4 * ratio). Error counters are per-turn flags: a turn increments each
counter at most once no matter how many actions exhibited the error, which
is what makes injection tests exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from ..agent_loop import TurnRecord
from ..errors import AgentError
from ..memory import tokenize
from ..world import DEFAULT_MARGIN, SceneWorld, SpatialRelation, category_matches, relation_holds
from .scenario import Check, CheckKind, Dimension, SCOREABLE_DIMENSIONS, Scenario

# Descriptor lexicon shared with the generator; the hallucination scan only
# trusts bigrams drawn from it, so prose cannot trip it by accident.
LEXICON_COLORS = ("red", "blue", "green", "yellow", "black", "white", "orange", "purple")
LEXICON_CATEGORIES = ("ball", "cup", "box", "book", "lamp", "chair", "plant", "disk")

ERROR_TYPES = (
    "context_loss",
    "visual_hallucination",
    "instruction_misinterpretation",
    "incomplete_execution",
    "factual_error",
)

BUCKETS = ("1-3", "4-6", "7+")


def bucket_of(turn: int) -> str:
    if turn <= 3:
        return "1-3"
    if turn <= 6:
        return "4-6"
    return "7+"


def _normalize(text: str) -> str:
    return " ".join(text.strip().lower().split())


def hallucinated_mentions(
    record: TurnRecord,
    scene: SceneWorld,
    colors: Sequence[str] = LEXICON_COLORS,
    categories: Sequence[str] = LEXICON_CATEGORIES,
) -> list[str]:
    """Entity references with no referent: ghost Point ids and attribute +
    category bigrams naming nothing visible. Scans every attempt, not just
    the surviving actions."""
    problems: list[str] = []
    ids = set(scene.ids())
    visible = scene.visible_entities()
    color_set = set(colors)
    for action in record.all_actions:
        kind = action.kind.value
        if kind == "point":
            if action.entity_id not in ids:
                problems.append(f"points at unknown {action.entity_id}")
        elif kind == "respond":
            tokens = tokenize(action.text)
            for i in range(len(tokens) - 1):
                value, cat_tok = tokens[i], tokens[i + 1]
                if value not in color_set:
                    continue
                if not any(category_matches(cat_tok, c) for c in categories):
                    continue
                exists = any(
                    category_matches(cat_tok, e.category)
                    and value in {v.lower() for v in e.attributes.values()}
                    for e in visible
                )
                if not exists:
                    problems.append(f"mentions absent {value} {cat_tok}")
    return problems


@dataclass
class CheckResult:
    turn: int
    dimension: Dimension
    kind: CheckKind
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "turn": self.turn,
            "dimension": self.dimension.value,
            "kind": self.kind.value,
            "passed": self.passed,
            "detail": self.detail,
        }


def _first_answer(record: TurnRecord) -> str | None:
    for key in sorted(record.answers):
        return record.answers[key]
    return None


def evaluate_check(
    check: Check,
    record: TurnRecord,
    scene_after: SceneWorld,
    transcript: Sequence[TurnRecord],
    *,
    margin: float = DEFAULT_MARGIN,
) -> CheckResult:
    expected = check.expected
    passed = False
    detail = ""
    if check.kind is CheckKind.RESOLVE_ENTITY:
        wanted = expected.get("entity_id")
        passed = wanted in record.resolved_ids
        if not passed:
            detail = f"expected {wanted} resolved, got {record.resolved_ids}"
    elif check.kind is CheckKind.ANSWER_EQUALS:
        wanted = _normalize(str(expected.get("value", "")))
        answers = [_normalize(v) for v in record.answers.values()]
        passed = wanted in answers
        if not passed:
            detail = f"expected answer '{wanted}', got {answers}"
    elif check.kind is CheckKind.ACTION_SEQUENCE:
        wanted_kinds = [str(k) for k in expected.get("kinds", [])]
        actual = [a.kind.value for a in record.primary_actions]
        passed = wanted_kinds == actual
        if not passed:
            detail = f"expected {wanted_kinds}, got {actual}"
    elif check.kind is CheckKind.RELATION_AFTER:
        try:
            rel = SpatialRelation(str(expected.get("relation")))
            passed = relation_holds(
                rel, str(expected.get("a")), str(expected.get("b")), scene_after, margin=margin
            )
            if not passed:
                detail = f"{expected.get('relation')} {expected.get('a')} {expected.get('b')} does not hold"
        except (AgentError, ValueError) as exc:
            passed = False
            detail = str(exc)
    elif check.kind is CheckKind.NO_HALLUCINATION:
        problems = hallucinated_mentions(record, scene_after)
        passed = not problems
        detail = "; ".join(problems)
    elif check.kind is CheckKind.CONSISTENCY_PAIR:
        ref_turn = int(expected.get("turn", 0))
        if 1 <= ref_turn <= len(transcript):
            earlier = _first_answer(transcript[ref_turn - 1])
            current = _first_answer(record)
            passed = (
                earlier is not None
                and current is not None
                and _normalize(earlier) == _normalize(current)
            )
            if not passed:
                detail = f"turn {ref_turn} said {earlier!r}, now {current!r}"
        else:
            detail = f"bad reference turn {ref_turn}"
    return CheckResult(record.turn, check.dimension, check.kind, passed, detail)


def classify_turn(
    record: TurnRecord,
    annotated_intents: Sequence[str],
    scene_after: SceneWorld,
    check_results: Sequence[CheckResult],
    checks: Sequence[Check],
) -> list[str]:
    """Error flags for one turn (each type at most once)."""
    flags: list[str] = []
    failed_resolves = [
        (res, chk)
        for res, chk in zip(check_results, checks)
        if res.kind is CheckKind.RESOLVE_ENTITY and not res.passed
    ]
    for res, chk in failed_resolves:
        antecedent = chk.expected.get("antecedent_turn")
        if antecedent is not None and record.turn - int(antecedent) >= 3:
            flags.append("context_loss")
            break
    if hallucinated_mentions(record, scene_after):
        flags.append("visual_hallucination")
    if annotated_intents and list(record.intents) != list(annotated_intents):
        flags.append("instruction_misinterpretation")
    if any(sub.get("status") == "failed" for sub in record.subtask_results):
        flags.append("incomplete_execution")
    answered = bool(record.answers)
    failed_answers = any(
        res.kind is CheckKind.ANSWER_EQUALS and not res.passed for res in check_results
    )
    if answered and failed_answers:
        flags.append("factual_error")
    return flags


@dataclass
class RunReport:
    scenario_id: str
    config_name: str
    check_results: list[CheckResult] = field(default_factory=list)
    turn_flags: list[list[str]] = field(default_factory=list)
    turn_count: int = 0
    # timing side-channel; intentionally absent from to_dict
    turn_durations_ms: list[float] = field(default_factory=list)
    phase_durations_ms: dict[str, list[float]] = field(default_factory=dict)
    error: str = ""

    def dimension_totals(self) -> dict[Dimension, tuple[int, int]]:
        totals: dict[Dimension, tuple[int, int]] = {}
        for res in self.check_results:
            passed, total = totals.get(res.dimension, (0, 0))
            totals[res.dimension] = (passed + (1 if res.passed else 0), total + 1)
        return totals

    def bucket_totals(self) -> dict[str, tuple[int, int]]:
        totals = {name: (0, 0) for name in BUCKETS}
        for res in self.check_results:
            name = bucket_of(res.turn)
            passed, total = totals[name]
            totals[name] = (passed + (1 if res.passed else 0), total + 1)
        return totals

    def error_counts(self) -> dict[str, int]:
        counts = {name: 0 for name in ERROR_TYPES}
        for flags in self.turn_flags:
            for flag in flags:
                counts[flag] += 1
        return counts

    def to_dict(self) -> dict[str, Any]:
        dims = {}
        for dim in SCOREABLE_DIMENSIONS:
            passed, total = self.dimension_totals().get(dim, (0, 0))
            dims[dim.value] = {
                "passed": passed,
                "total": total,
                "score": round(passed / total, 6) if total else None,
            }
        return {
            "scenario_id": self.scenario_id,
            "config": self.config_name,
            "turns": self.turn_count,
            "dimensions": dims,
            "errors": self.error_counts(),
            "turn_flags": self.turn_flags,
            "buckets": {
                k: {"passed": p, "total": t} for k, (p, t) in self.bucket_totals().items()
            },
            "checks": [c.to_dict() for c in self.check_results],
            "run_error": self.error,
        }


def score_run(
    scenario: Scenario,
    transcript: Sequence[TurnRecord],
    scenes_after: Sequence[SceneWorld],
    config_name: str = "full",
    *,
    margin: float = DEFAULT_MARGIN,
) -> RunReport:
    report = RunReport(scenario_id=scenario.id, config_name=config_name)
    report.turn_count = len(transcript)
    for i, record in enumerate(transcript):
        turn_spec = scenario.turns[i]
        scene_after = scenes_after[i]
        results = [
            evaluate_check(chk, record, scene_after, transcript, margin=margin)
            for chk in turn_spec.checks
        ]
        report.check_results.extend(results)
        report.turn_flags.append(
            classify_turn(record, turn_spec.annotated_intents, scene_after, results, turn_spec.checks)
        )
        report.turn_durations_ms.append(record.duration_ms)
        for phase, ms in record.phase_durations.items():
            report.phase_durations_ms.setdefault(phase, []).append(ms)
    return report


def pool_dimension_scores(
    reports: Sequence[RunReport],
) -> dict[str, dict[str, Any]]:
    pooled: dict[Dimension, tuple[int, int]] = {}
    for report in reports:
        for dim, (passed, total) in report.dimension_totals().items():
            prev_p, prev_t = pooled.get(dim, (0, 0))
            pooled[dim] = (prev_p + passed, prev_t + total)
    out: dict[str, dict[str, Any]] = {}
    for dim in SCOREABLE_DIMENSIONS:
        passed, total = pooled.get(dim, (0, 0))
        score = passed / total if total else None
        out[dim.value] = {
            "passed": passed,
            "total": total,
            "score": round(score, 6) if score is not None else None,
            "mapped": round(1.0 + 4.0 * score, 6) if score is not None else None,
        }
    out[Dimension.RESPONSE_FLUENCY.value] = {
        "passed": None,
        "total": None,
        "score": None,
        "mapped": None,
        "note": "n/a (human-rated)",
    }
    return out


def pool_buckets(reports: Sequence[RunReport]) -> dict[str, dict[str, Any]]:
    pooled = {name: [0, 0] for name in BUCKETS}
    for report in reports:
        for name, (passed, total) in report.bucket_totals().items():
            pooled[name][0] += passed
            pooled[name][1] += total
    return {
        name: {
            "passed": p,
            "total": t,
            "score": round(p / t, 6) if t else None,
        }
        for name, (p, t) in pooled.items()
    }


def pool_errors(reports: Sequence[RunReport]) -> dict[str, Any]:
    counts = {name: 0 for name in ERROR_TYPES}
    turns = 0
    for report in reports:
        turns += report.turn_count
        for name, value in report.error_counts().items():
            counts[name] += value
    rates = {
        name: round(counts[name] / turns, 6) if turns else None for name in ERROR_TYPES
    }
    return {"counts": counts, "rates": rates, "turns": turns}


def aggregate_reports(reports: Sequence[RunReport], config_name: str) -> dict[str, Any]:
    return {
        "config": config_name,
        "scenarios": len(reports),
        "dimensions": pool_dimension_scores(reports),
        "buckets": pool_buckets(reports),
        "errors": pool_errors(reports),
        "failed_runs": sorted(r.scenario_id for r in reports if r.error),
    }


def percentile(values: Sequence[float], q: float) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    idx = min(len(ordered) - 1, max(0, math.ceil(q * len(ordered)) - 1))
    return ordered[idx]


def latency_stats(reports: Sequence[RunReport]) -> dict[str, Any]:
    turns: list[float] = []
    phases: dict[str, list[float]] = {}
    for report in reports:
        turns.extend(report.turn_durations_ms)
        for phase, values in report.phase_durations_ms.items():
            phases.setdefault(phase, []).extend(values)
    out: dict[str, Any] = {
        "per_turn": {
            "mean_ms": round(sum(turns) / len(turns), 3) if turns else 0.0,
            "p95_ms": round(percentile(turns, 0.95), 3),
            "count": len(turns),
        },
        "per_phase": {},
    }
    for phase in sorted(phases):
        values = phases[phase]
        out["per_phase"][phase] = {
            "mean_ms": round(sum(values) / len(values), 3) if values else 0.0,
            "p95_ms": round(percentile(values, 0.95), 3),
            "count": len(values),
        }
    return out


_DIM_SHORT = {
    "visual_entity_tracking": "tracking",
    "dialogue_consistency": "consistency",
    "reasoning_depth": "reasoning",
    "instruction_adherence": "adherence",
    "error_suppression": "suppression",
    "response_fluency": "fluency",
}


def render_score_table(aggregates: Mapping[str, Mapping[str, Any]]) -> str:
    dims = [d.value for d in Dimension]
    header = ["config".ljust(14)] + [_DIM_SHORT[d].rjust(12) for d in dims]
    lines = ["Dimension scores (pass ratio / 1-5 mapped)", "".join(header)]
    for config in aggregates:
        row = [config.ljust(14)]
        for dim in dims:
            cell = aggregates[config]["dimensions"][dim]
            if cell.get("score") is None:
                row.append("n/a".rjust(12))
            else:
                row.append(f"{cell['score']:.2f}/{cell['mapped']:.2f}".rjust(12))
        lines.append("".join(row))
    return "\n".join(lines)


def render_bucket_table(aggregates: Mapping[str, Mapping[str, Any]]) -> str:
    lines = ["Scores by turn bucket", "config".ljust(14) + "".join(b.rjust(10) for b in BUCKETS)]
    for config in aggregates:
        row = [config.ljust(14)]
        for bucket in BUCKETS:
            cell = aggregates[config]["buckets"][bucket]
            row.append(("-" if cell["score"] is None else f"{cell['score']:.2f}").rjust(10))
        lines.append("".join(row))
    return "\n".join(lines)


def render_error_table(aggregates: Mapping[str, Mapping[str, Any]]) -> str:
    lines = [
        "Error turns (count / rate)",
        "config".ljust(14) + "".join(e.split("_")[-1].rjust(18) for e in ERROR_TYPES),
    ]
    for config in aggregates:
        errors = aggregates[config]["errors"]
        row = [config.ljust(14)]
        for err in ERROR_TYPES:
            count = errors["counts"][err]
            rate = errors["rates"][err]
            row.append(f"{count} ({0.0 if rate is None else rate:.3f})".rjust(18))
        lines.append("".join(row))
    return "\n".join(lines)


def render_latency_table(stats_by_config: Mapping[str, Mapping[str, Any]]) -> str:
    lines = ["Latency (ms, mean / p95)"]
    for config, stats in stats_by_config.items():
        turn = stats["per_turn"]
        lines.append(f"{config}: per-turn {turn['mean_ms']:.2f} / {turn['p95_ms']:.2f}")
        for phase, cell in stats["per_phase"].items():
            lines.append(f"    {phase.ljust(10)} {cell['mean_ms']:.3f} / {cell['p95_ms']:.3f}")
    return "\n".join(lines)
