"""Shared task types: levels, observation specs, step results, instances."""
from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field
from typing import Any

import numpy as np


class Level(str, enum.Enum):
    TRAIN_SMALL = "train_small"
    TRAIN_LARGE = "train_large"
    HOLDOUT_INTERPOLATE = "holdout_interpolate"
    HOLDOUT_EXTRAPOLATE = "holdout_extrapolate"

    @property
    def is_train(self) -> bool:
        return self in (Level.TRAIN_SMALL, Level.TRAIN_LARGE)

    @classmethod
    def parse(cls, value) -> "Level":
        """Accept a Level, its value, its name or a short alias such as ``extrap``."""
        if isinstance(value, Level):
            return value
        key = str(value).lower().replace("-", "_")
        for lv in cls:
            if key in (lv.value, lv.name.lower(), lv.value.replace("_", "")):
                return lv
        aliases = {"small": cls.TRAIN_SMALL, "large": cls.TRAIN_LARGE,
                   "interpolate": cls.HOLDOUT_INTERPOLATE, "interp": cls.HOLDOUT_INTERPOLATE,
                   "extrapolate": cls.HOLDOUT_EXTRAPOLATE, "extrap": cls.HOLDOUT_EXTRAPOLATE}
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown level {value!r}")


LEVEL_ORDER = (Level.TRAIN_SMALL, Level.HOLDOUT_INTERPOLATE, Level.TRAIN_LARGE, Level.HOLDOUT_EXTRAPOLATE)


@dataclass(frozen=True)
class ObsSpec:
    """Flat float observation; grid families prepend a V×V×C egocentric window."""

    kind: str
    size: int
    grid_shape: tuple | None = None
    extra: int = 0


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


@dataclass
class TaskSpec:
    family: str
    level: Level
    seed: int
    scale: Any
    stimulus_pool: tuple


class TaskInstance:
    """One environment for (family, level, seed); successive resets are deterministic.

    Subclasses provide ``_sample_layout``, ``_begin``, ``_observe``,
    ``_advance`` and ``oracle_action``.
    """

    family: str = ""
    num_actions: int = 0
    obs_spec: ObsSpec

    def __init__(self, spec: TaskSpec, stream: int = 0, overrides: dict | None = None):
        self.spec = spec
        self.overrides = dict(overrides or {})
        self.stream = stream
        self.rng = np.random.default_rng([_family_key(spec.family), spec.seed,
                                          list(Level).index(spec.level), stream])
        self.codes = stimulus_codes(spec.family, spec.seed, self.code_vocabulary(), self.code_dim)
        self.done = True
        self.t = 0
        self.episode = -1
        self.episode_reward = 0.0
        self.trial_log: list[dict] = []

    code_dim = 16

    def code_vocabulary(self) -> tuple:
        return ()

    # episode lifecycle ---------------------------------------------------
    def reset(self) -> np.ndarray:
        return self.begin(self._sample_layout(self.rng))

    def begin(self, layout: dict) -> np.ndarray:
        self.episode += 1
        self.t = 0
        self.done = False
        self.episode_reward = 0.0
        self.trial_log = []
        self.layout = layout
        self._begin(layout)
        return self._observe()

    def step(self, action: int) -> StepResult:
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        action = int(action)
        if not 0 <= action < self.num_actions:
            raise ValueError(f"action {action} out of range [0, {self.num_actions})")
        reward, done, info = self._advance(action)
        self.t += 1
        if not done and self.t >= self.step_cap():
            done = True
            info = dict(info, truncated=True)
        self.done = done
        self.episode_reward += reward
        obs = self._observe()
        return StepResult(obs, float(reward), done, info)

    def step_cap(self) -> int:
        return 10 * max(1, self.oracle_steps())

    # to override ---------------------------------------------------------
    def _sample_layout(self, rng: np.random.Generator) -> dict:
        raise NotImplementedError

    def _begin(self, layout: dict) -> None:
        raise NotImplementedError

    def _observe(self) -> np.ndarray:
        raise NotImplementedError

    def _advance(self, action: int) -> tuple[float, bool, dict]:
        raise NotImplementedError

    def oracle_action(self) -> int:
        raise NotImplementedError

    def oracle_steps(self) -> int:
        raise NotImplementedError

    def analytic_max(self) -> float:
        raise NotImplementedError


def _family_key(family: str) -> int:
    return zlib.crc32(family.encode("utf-8"))


def stimulus_codes(family: str, seed: int, vocabulary: tuple, dim: int) -> dict:
    """Distinct non-zero binary codes for every stimulus id, fixed per (family, seed).

    The assignment is a random draw, so code values carry no information
    about whether an id belongs to the training or the holdout pool.
    """
    if not vocabulary:
        return {}
    rng = np.random.default_rng([_family_key(family), seed, 7919])
    picks = rng.choice(np.arange(1, 2 ** dim), size=len(vocabulary), replace=False)
    bits = ((picks[:, None] >> np.arange(dim)) & 1).astype(np.float64)
    return {sid: bits[i] for i, sid in enumerate(vocabulary)}
