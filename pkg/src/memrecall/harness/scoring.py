"""Reward-curve smoothing and oracle-normalized scores."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..diffcore import ContractError

LEVEL_KEYS = ("train", "interpolate", "extrapolate")


def ewma(curve, alpha: float) -> np.ndarray:
    """s_0 = x_0, s_t = α x_t + (1 - α) s_{t-1}."""
    x = np.asarray(curve, dtype=np.float64)
    if x.size == 0:
        raise ContractError("cannot smooth an empty series")
    if not 0.0 < alpha <= 1.0:
        raise ContractError(f"alpha must lie in (0, 1], got {alpha}")
    return np.asarray(kernels.ewma(x, float(alpha)))


def rolling_mean(curve, window: int = 10) -> np.ndarray:
    x = np.asarray(curve, dtype=np.float64)
    if x.size == 0:
        raise ContractError("cannot average an empty series")
    if window < 1:
        raise ContractError("window must be >= 1")
    return np.asarray(kernels.rolling_mean(x, int(window)))


def point_alpha(alpha: float, episodes_per_point: float | None) -> float:
    """Per-episode α expressed per curve point that summarises ``episodes_per_point`` episodes."""
    if not episodes_per_point or episodes_per_point <= 1:
        return alpha
    return float(1.0 - (1.0 - alpha) ** episodes_per_point)


@dataclass
class RunRecord:
    """Reward curves of one (config, family) over seeds, sampled at shared evaluation steps.

    ``curves[level]`` is a list (one per seed) of equal-length arrays.
    """

    config: str
    family: str
    seeds: list
    steps: list
    curves: dict
    episodes_per_point: float | None = None
    failed_seeds: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


@dataclass
class ScoreRow:
    config: str
    family: str
    scores: dict          # level -> (mean, stderr)
    per_seed: dict        # level -> list of per-seed scores
    snapshot_index: list  # per seed, index into the rolling train curve


def _baseline(value, level):
    return value[level] if isinstance(value, dict) else value


def normalize(reward, r_random: float, r_oracle: float):
    """(R - R_random) / (R_oracle - R_random) · 100."""
    if r_oracle <= r_random:
        raise ContractError(f"oracle reward {r_oracle} must exceed random reward {r_random}")
    return (np.asarray(reward, dtype=np.float64) - r_random) / (r_oracle - r_random) * 100.0


def mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return float("nan"), float("nan")
    err = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), err


def normalized_score(run: RunRecord, r_random, r_oracle, alpha: float = 0.05, window: int = 10) -> ScoreRow:
    """Score a run: smooth, roll, snapshot at the best train window, normalise.

    ``r_random`` / ``r_oracle`` are floats or dicts keyed by ``train``,
    ``interpolate`` and ``extrapolate``.  Holdout values are read at each
    seed's train-maximum snapshot, never at their own maxima.
    """
    seeds = len(run.curves["train"])
    if seeds == 0:
        raise ContractError("run has no successful seeds")
    a = point_alpha(alpha, run.episodes_per_point)
    per_seed = {k: [] for k in LEVEL_KEYS}
    snaps = []
    for s in range(seeds):
        rolled = {}
        for level in LEVEL_KEYS:
            curve = np.asarray(run.curves[level][s], dtype=np.float64)
            if curve.size == 0:
                raise ContractError(f"empty {level} curve for seed {run.seeds[s]}")
            rolled[level] = rolling_mean(ewma(curve, a), window)
        idx = int(np.argmax(rolled["train"]))
        snaps.append(idx)
        for level in LEVEL_KEYS:
            r = rolled[level][min(idx, rolled[level].size - 1)]
            per_seed[level].append(float(normalize(r, _baseline(r_random, level), _baseline(r_oracle, level))))
    scores = {level: mean_stderr(per_seed[level]) for level in LEVEL_KEYS}
    return ScoreRow(run.config, run.family, scores, per_seed, snaps)
