"""Family registry and the ``make_task`` entry point."""
from __future__ import annotations

from . import gridworld, psychlab, tables
from .base import Level, TaskInstance, TaskSpec

_CLASSES = {
    "avm": psychlab.ArbitraryVisuomotor,
    "continuous_recognition": psychlab.ContinuousRecognition,
    "change_detection": psychlab.ChangeDetection,
    "what_then_where": psychlab.WhatThenWhere,
    "spot_diff_basic": gridworld.SpotDiffBasic,
    "spot_diff_passive": gridworld.SpotDiffPassive,
    "spot_diff_multi_object": gridworld.SpotDiffMultiObject,
    "spot_diff_motion": gridworld.SpotDiffMotion,
    "visible_goal_maze": gridworld.VisibleGoalMaze,
    "visible_goal_buildings": gridworld.VisibleGoalBuildings,
    "invisible_goal_buildings": gridworld.InvisibleGoalBuildings,
    "invisible_goal_empty": gridworld.InvisibleGoalEmpty,
    "transitive_inference": gridworld.TransitiveInference,
}


def _scaled_trials(level: Level, trials: int) -> int:
    """Rescale the trial table so ``trials`` replaces the training count."""
    base = tables.TRIALS[Level.TRAIN_SMALL]
    return max(1, int(round(trials * tables.TRIALS[level] / base)))


def resolve_scale(family: str, level: Level, overrides: dict):
    if family in ("avm", "continuous_recognition") and "trials" in overrides:
        return _scaled_trials(level, int(overrides["trials"]))
    key = tables.SCALE_NAMES[family]
    if key in overrides:
        return overrides[key]
    return tables.SCALES[family][level]


def make_task(family: str, level, seed: int, stream: int = 0, **overrides) -> TaskInstance:
    """Build the environment for (family, level, seed).

    ``stream`` selects an independent episode sequence over the same
    per-seed stimulus codes (used for evaluation actors).  ``overrides``
    adjust desk-scale knobs such as ``trials`` for the AVM analog.
    """
    family = tables.canonical_family(family)
    level = Level.parse(level)
    spec = TaskSpec(family, level, int(seed), resolve_scale(family, level, overrides),
                    tables.pool_for(family, level))
    return _CLASSES[family](spec, stream=stream, overrides=overrides)


def task_class(family: str):
    return _CLASSES[tables.canonical_family(family)]
