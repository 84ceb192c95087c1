"""Ablation matrix, training runs, scoring and reports."""
from .ablation import ALL_CONFIGS, MRA, AblationConfig
from .config import (PUBLISHED_HYPERS, SCHEMA, RunSettings, apply_overrides, defaults_for, load_settings,
                     parse_overrides, schema_text)
from .report import (REPORT_COLUMNS, SCORE_LABEL, ScoreReport, emit_report, heatmap_text, parse_report_csv,
                     sort_order)
from .runner import (SeedResult, TrainLevelMixer, build_agent, build_learner, compute_baselines, evaluate,
                     evaluate_levels, record_from_results, run_directory, run_matrix, score_record, train_run)
from .scoring import (LEVEL_KEYS, RunRecord, ScoreRow, ewma, mean_stderr, normalize, normalized_score,
                      point_alpha, rolling_mean)

__all__ = [
    "ALL_CONFIGS", "MRA", "AblationConfig", "PUBLISHED_HYPERS", "SCHEMA", "RunSettings", "apply_overrides",
    "defaults_for", "load_settings", "parse_overrides", "schema_text", "REPORT_COLUMNS", "SCORE_LABEL",
    "ScoreReport", "emit_report", "heatmap_text", "parse_report_csv", "sort_order", "SeedResult",
    "TrainLevelMixer", "build_agent", "build_learner", "compute_baselines", "evaluate", "evaluate_levels",
    "record_from_results", "run_directory", "run_matrix", "score_record", "train_run", "LEVEL_KEYS",
    "RunRecord", "ScoreRow", "ewma", "mean_stderr", "normalize", "normalized_score", "point_alpha",
    "rolling_mean",
]
