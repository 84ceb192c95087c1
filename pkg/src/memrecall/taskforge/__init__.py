"""Desk-scale analogs of the memory task suite with train/holdout levels."""
from .base import LEVEL_ORDER, Level, ObsSpec, StepResult, TaskInstance, TaskSpec, stimulus_codes
from .policies import (
    MEMORY_FAMILIES,
    MemorylessResult,
    OraclePolicy,
    RandomPolicy,
    ReturnEstimate,
    estimate_return,
    memoryless_search,
    oracle_baseline,
    oracle_policy,
    random_baseline,
    random_policy,
    run_episode,
)
from .registry import make_task, task_class
from .tables import EWMA_ALPHA, FAMILIES, NAVIGATION, PSYCHLAB, SPOT_DIFF, canonical_family, pool_for, scale_for


def step(instance: TaskInstance, action: int) -> StepResult:
    return instance.step(action)


__all__ = [
    "EWMA_ALPHA", "FAMILIES", "LEVEL_ORDER", "Level", "MEMORY_FAMILIES", "MemorylessResult", "NAVIGATION",
    "ObsSpec", "OraclePolicy", "PSYCHLAB", "RandomPolicy", "ReturnEstimate", "SPOT_DIFF", "StepResult",
    "TaskInstance", "TaskSpec", "canonical_family", "estimate_return", "make_task", "memoryless_search",
    "oracle_baseline", "oracle_policy", "pool_for", "random_baseline", "random_policy", "run_episode",
    "scale_for", "step", "stimulus_codes", "task_class",
]
