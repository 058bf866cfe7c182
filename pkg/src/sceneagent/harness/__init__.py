"""Benchmark harness: scenario files, generation, execution, scoring."""

from .generator import (
    ARCHETYPES,
    DEFAULT_MIX,
    DEFAULT_SUITE_SEED,
    generate_scenario,
    generate_suite,
    save_suite,
)
from .runner import (
    ABLATION_CONFIGS,
    DEFAULT_GRID,
    ScenarioRun,
    SuiteResult,
    config_for,
    oracle_replay,
    run_scenario,
    run_suite,
    trace_lines,
    write_bench_artifacts,
)
from .scenario import (
    CHECK_DIMENSIONS,
    Check,
    CheckKind,
    Dimension,
    SCOREABLE_DIMENSIONS,
    Scenario,
    ScenarioTurn,
    canonical_json,
    load_scenario,
    load_suite,
    save_scenario,
    validate_scenario,
)
from .scoring import (
    BUCKETS,
    ERROR_TYPES,
    LEXICON_CATEGORIES,
    LEXICON_COLORS,
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
    score_run,
)

__all__ = [
    "ABLATION_CONFIGS",
    "ARCHETYPES",
    "BUCKETS",
    "CHECK_DIMENSIONS",
    "Check",
    "CheckKind",
    "DEFAULT_GRID",
    "DEFAULT_MIX",
    "DEFAULT_SUITE_SEED",
    "Dimension",
    "ERROR_TYPES",
    "LEXICON_CATEGORIES",
    "LEXICON_COLORS",
    "RunReport",
    "SCOREABLE_DIMENSIONS",
    "Scenario",
    "ScenarioRun",
    "ScenarioTurn",
    "SuiteResult",
    "aggregate_reports",
    "bucket_of",
    "canonical_json",
    "classify_turn",
    "config_for",
    "evaluate_check",
    "generate_scenario",
    "generate_suite",
    "hallucinated_mentions",
    "latency_stats",
    "load_scenario",
    "load_suite",
    "oracle_replay",
    "percentile",
    "pool_buckets",
    "pool_dimension_scores",
    "pool_errors",
    "render_bucket_table",
    "render_error_table",
    "render_latency_table",
    "render_score_table",
    "run_scenario",
    "run_suite",
    "save_scenario",
    "save_suite",
    "score_run",
    "trace_lines",
    "validate_scenario",
    "write_bench_artifacts",
]
