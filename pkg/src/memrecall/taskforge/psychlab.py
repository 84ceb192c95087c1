"""Symbolic prompt/response analogs of the four screen-based tasks.

Actions are the five screen actions: 0 look left, 1 look right, 2 look up,
3 look down, 4 no-op.  Stimuli are abstract ids rendered as per-seed random
binary codes.
"""
from __future__ import annotations

import numpy as np

from . import tables
from .base import ObsSpec, TaskInstance

LEFT, RIGHT, UP, DOWN, NOOP = range(5)
DIRECTIONS = (LEFT, RIGHT, UP, DOWN)


class _Symbolic(TaskInstance):
    num_actions = 5
    code_dim = 16

    def code_vocabulary(self) -> tuple:
        train, holdout = tables.STIMULI[self.family]
        return train + holdout

    def _pool(self) -> tuple:
        pool = self.spec.stimulus_pool
        n = self.overrides.get("pool_size")
        return pool[:n] if n else pool

    def action_rewards(self) -> np.ndarray:
        """Reward each action would earn at the current step (for strategy search)."""
        raise NotImplementedError

    def _blank(self) -> np.ndarray:
        return np.zeros(self.obs_spec.size)


class ArbitraryVisuomotor(_Symbolic):
    """Each trial shows a stimulus; the first showing also reveals its direction.

    Every action ends the trial, so a uniformly random agent scores N/5.
    """

    family = "avm"

    def __init__(self, spec, stream=0, overrides=None):
        super().__init__(spec, stream, overrides)
        self.trials = int(spec.scale)
        self.distinct = int(self.overrides.get("distinct") or min(self.trials, max(2, round(0.3 * self.trials))))
        self.obs_spec = ObsSpec("flat", self.code_dim + 4)

    def _sample_layout(self, rng):
        pool = self._pool()
        stims = [pool[i] for i in rng.choice(len(pool), self.distinct, replace=False)]
        seq = np.concatenate([np.arange(self.distinct), rng.integers(0, self.distinct, self.trials - self.distinct)])
        rng.shuffle(seq)
        return {"stimuli": stims, "sequence": [int(s) for s in seq],
                "directions": [int(d) for d in rng.integers(0, 4, self.distinct)]}

    def _begin(self, layout):
        self.trial = 0
        seq = layout["sequence"]
        self.first = [seq.index(s) == t for t, s in enumerate(seq)]

    def _observe(self):
        obs = self._blank()
        if self.done:
            return obs
        s = self.layout["sequence"][self.trial]
        obs[: self.code_dim] = self.codes[self.layout["stimuli"][s]]
        if self.first[self.trial]:
            obs[self.code_dim + self.layout["directions"][s]] = 1.0
        return obs

    def _target(self):
        return self.layout["directions"][self.layout["sequence"][self.trial]]

    def action_rewards(self):
        r = np.zeros(self.num_actions)
        r[self._target()] = 1.0
        return r

    def _advance(self, action):
        reward = float(action == self._target())
        self.trial_log.append({"trial": self.trial, "reward": reward, "steps": 1})
        self.trial += 1
        return reward, self.trial >= self.trials, {"trial": self.trial - 1}

    def oracle_action(self):
        return self._target()

    def oracle_steps(self):
        return self.trials

    def analytic_max(self):
        return float(self.trials)


class ContinuousRecognition(_Symbolic):
    """Answer seen (left) or unseen (right) for each stimulus; other actions wait."""

    family = "continuous_recognition"
    repeat_prob = 0.5

    def __init__(self, spec, stream=0, overrides=None):
        super().__init__(spec, stream, overrides)
        self.trials = int(spec.scale)
        self.obs_spec = ObsSpec("flat", self.code_dim)

    def _sample_layout(self, rng):
        pool = list(self._pool())
        order = [pool[i] for i in rng.permutation(len(pool))]
        shown, seq = [], []
        for t in range(self.trials):
            if shown and (len(shown) == len(order) or rng.random() < self.repeat_prob):
                seq.append(shown[rng.integers(len(shown))])
            else:
                seq.append(order[len(shown)])
                shown.append(seq[-1])
        return {"sequence": seq}

    def _begin(self, layout):
        self.trial = 0
        self.trial_steps = 0
        seq = layout["sequence"]
        self.answers = [LEFT if s in seq[:t] else RIGHT for t, s in enumerate(seq)]

    def _observe(self):
        if self.done:
            return self._blank()
        return self.codes[self.layout["sequence"][self.trial]].copy()

    def action_rewards(self):
        r = np.zeros(self.num_actions)
        r[self.answers[self.trial]] = 1.0
        return r

    def _advance(self, action):
        self.trial_steps += 1
        if action not in (LEFT, RIGHT):
            return 0.0, False, {"trial": self.trial}
        reward = float(action == self.answers[self.trial])
        self.trial_log.append({"trial": self.trial, "reward": reward, "steps": self.trial_steps})
        self.trial += 1
        self.trial_steps = 0
        return reward, self.trial >= self.trials, {"trial": self.trial - 1}

    def oracle_action(self):
        return self.answers[self.trial]

    def oracle_steps(self):
        return self.trials

    def analytic_max(self):
        return float(self.trials)


class _Phased(_Symbolic):
    """Trials made of a fixed sequence of timed phases ending in an answer step."""

    phases: tuple = ()
    answer_actions: tuple = ()

    def __init__(self, spec, stream=0, overrides=None):
        super().__init__(spec, stream, overrides)
        delays = self.overrides.get("delays") or spec.scale
        self.delays = tuple(int(d) for d in np.atleast_1d(delays))
        self.trials = int(self.overrides.get("trials", 10))

    def _schedule(self, trial_layout) -> list[str]:
        raise NotImplementedError

    def _begin(self, layout):
        self.trial = 0
        self.trial_steps = 0
        self.script = [self._schedule(tl) for tl in layout["trials"]]
        self.pos = 0

    @property
    def phase(self) -> str:
        return self.script[self.trial][self.pos]

    def _answer(self) -> int:
        raise NotImplementedError

    def action_rewards(self):
        r = np.zeros(self.num_actions)
        if self.phase == "answer":
            r[self._answer()] = 1.0
        return r

    def _advance(self, action):
        self.trial_steps += 1
        if self.phase != "answer":
            self.pos += 1
            return 0.0, False, {"trial": self.trial}
        if action not in self.answer_actions:
            return 0.0, False, {"trial": self.trial}
        reward = float(action == self._answer())
        self.trial_log.append({"trial": self.trial, "reward": reward, "steps": self.trial_steps})
        self.trial += 1
        self.pos = 0
        self.trial_steps = 0
        return reward, self.trial >= self.trials, {"trial": self.trial - 1}

    def oracle_action(self):
        return self._answer() if self.phase == "answer" else NOOP

    def oracle_steps(self):
        return sum(len(s) for s in self.script)

    def analytic_max(self):
        return float(self.trials)


class ChangeDetection(_Phased):
    """Study pattern, blank delay, test pattern; answer no-change (left) or change (right)."""

    family = "change_detection"
    answer_actions = (LEFT, RIGHT)

    def __init__(self, spec, stream=0, overrides=None):
        super().__init__(spec, stream, overrides)
        self.cells = int(self.overrides.get("cells", 4))
        self.obs_spec = ObsSpec("flat", self.cells * self.code_dim + 3)

    def _sample_layout(self, rng):
        pool = self._pool()
        trials = []
        for _ in range(self.trials):
            first = [pool[i] for i in rng.integers(0, len(pool), self.cells)]
            second = list(first)
            changed = bool(rng.random() < 0.5)
            if changed:
                cell = int(rng.integers(self.cells))
                others = [c for c in pool if c != first[cell]]
                second[cell] = others[rng.integers(len(others))]
            trials.append({"first": first, "second": second, "changed": changed,
                           "delay": int(self.delays[rng.integers(len(self.delays))])})
        return {"trials": trials}

    def _schedule(self, tl):
        return ["study"] + ["delay"] * tl["delay"] + ["answer"]

    def _answer(self):
        return RIGHT if self.layout["trials"][self.trial]["changed"] else LEFT

    def _observe(self):
        obs = self._blank()
        if self.done:
            return obs
        tl = self.layout["trials"][self.trial]
        phase = self.phase
        if phase in ("study", "answer"):
            pattern = tl["first"] if phase == "study" else tl["second"]
            for i, c in enumerate(pattern):
                obs[i * self.code_dim:(i + 1) * self.code_dim] = self.codes[c]
        obs[self.cells * self.code_dim + ("study", "delay", "answer").index(phase)] = 1.0
        return obs


class WhatThenWhere(_Phased):
    """Challenge symbol, delay, four-symbol layout, then point at the challenge's location."""

    family = "what_then_where"
    answer_actions = DIRECTIONS
    slots = 5  # centre, left, right, up, down

    def __init__(self, spec, stream=0, overrides=None):
        super().__init__(spec, stream, overrides)
        self.obs_spec = ObsSpec("flat", self.slots * self.code_dim + 4)

    def _sample_layout(self, rng):
        pool = self._pool()
        trials = []
        for _ in range(self.trials):
            picks = [pool[i] for i in rng.choice(len(pool), 4, replace=False)]
            where = [picks[i] for i in rng.permutation(4)]
            trials.append({"what": picks[0], "where": where,
                           "delay": int(self.delays[rng.integers(len(self.delays))])})
        return {"trials": trials}

    def _schedule(self, tl):
        return ["what"] + ["delay"] * tl["delay"] + ["where", "answer"]

    def _answer(self):
        tl = self.layout["trials"][self.trial]
        return DIRECTIONS[tl["where"].index(tl["what"])]

    def _observe(self):
        obs = self._blank()
        if self.done:
            return obs
        tl = self.layout["trials"][self.trial]
        phase = self.phase
        d = self.code_dim
        if phase == "what":
            obs[:d] = self.codes[tl["what"]]
        elif phase == "where":
            for j, s in enumerate(tl["where"]):
                obs[(j + 1) * d:(j + 2) * d] = self.codes[s]
        obs[self.slots * d + ("what", "delay", "where", "answer").index(phase)] = 1.0
        return obs
