"""Scripted baselines: the hidden-state oracle, the uniform random agent and
an exhaustive search over memoryless strategies at tiny task sizes."""
from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import tables
from .base import Level
from .registry import make_task


class OraclePolicy:
    """Acts on the instance's hidden state (remembers everything, knows the goal)."""

    def __init__(self, family: str):
        self.family = tables.canonical_family(family)

    def __call__(self, instance, observation=None) -> int:
        return instance.oracle_action()


class RandomPolicy:
    """Uniform over the instance's action set."""

    def __init__(self, family: str, seed: int = 0):
        self.family = tables.canonical_family(family)
        self.rng = np.random.default_rng(seed)

    def __call__(self, instance, observation=None) -> int:
        return int(self.rng.integers(instance.num_actions))


def oracle_policy(family: str) -> OraclePolicy:
    return OraclePolicy(family)


def random_policy(family: str, seed: int = 0) -> RandomPolicy:
    return RandomPolicy(family, seed)


def run_episode(instance, policy) -> tuple[float, int]:
    """Play one episode from a fresh reset; returns (total reward, steps)."""
    obs = instance.reset()
    total, steps = 0.0, 0
    while not instance.done:
        res = instance.step(policy(instance, obs))
        obs = res.observation
        total += res.reward
        steps += 1
    return total, steps


@dataclass
class ReturnEstimate:
    mean: float
    stderr: float
    episodes: int


def estimate_return(family: str, level, seed: int, policy, episodes: int = 20, stream: int = 1000,
                    **overrides) -> ReturnEstimate:
    """Mean episode reward ± standard error over ``episodes`` fresh episodes."""
    if episodes < 1:
        raise ValueError("need at least one episode")
    inst = make_task(family, level, seed, stream=stream, **overrides)
    rewards = np.array([run_episode(inst, policy)[0] for _ in range(episodes)])
    err = float(rewards.std(ddof=1) / np.sqrt(episodes)) if episodes > 1 else 0.0
    return ReturnEstimate(float(rewards.mean()), err, episodes)


def random_baseline(family: str, level, seed: int = 0, episodes: int = 20, **overrides) -> ReturnEstimate:
    return estimate_return(family, level, seed, RandomPolicy(family, seed), episodes, **overrides)


def oracle_baseline(family: str, level, seed: int = 0, episodes: int = 20, **overrides) -> ReturnEstimate:
    return estimate_return(family, level, seed, OraclePolicy(family), episodes, **overrides)


# --------------------------------------------------------------------------
# memoryless strategy search


@dataclass
class MemorylessResult:
    family: str
    memoryless: float
    oracle: float
    layouts: int


def _avm_layouts(inst):
    stims = list(inst.spec.stimulus_pool[:2])
    for seq in itertools.product(range(2), repeat=inst.trials):
        if len(set(seq)) < 2:
            continue
        for dirs in itertools.product(range(4), repeat=2):
            yield 1.0, {"stimuli": stims, "sequence": list(seq), "directions": list(dirs)}


def _cr_layouts(inst):
    pool = list(inst._pool())
    p = inst.repeat_prob

    def rec(seq, w):
        if len(seq) == inst.trials:
            yield w, {"sequence": list(seq)}
            return
        shown = list(dict.fromkeys(seq))
        unseen = [s for s in pool if s not in shown]
        if not shown:
            branches = [(1.0, unseen)]
        elif not unseen:
            branches = [(1.0, shown)]
        else:
            branches = [(p, shown), (1 - p, unseen)]
        for bw, options in branches:
            for s in options:
                yield from rec(seq + [s], w * bw / len(options))

    yield from rec([], 1.0)


def _cd_layouts(inst):
    pool = list(inst._pool())
    delay = inst.delays[0]
    for first in itertools.product(pool, repeat=inst.cells):
        first = list(first)
        yield 0.5, {"trials": [{"first": first, "second": first, "changed": False, "delay": delay}]}
        for cell in range(inst.cells):
            others = [c for c in pool if c != first[cell]]
            for c in others:
                second = list(first)
                second[cell] = c
                yield 0.5 / (inst.cells * len(others)), {
                    "trials": [{"first": first, "second": second, "changed": True, "delay": delay}]}


def _wtw_layouts(inst):
    pool = list(inst._pool())
    delay = inst.delays[0]
    for picks in itertools.permutations(pool, 4):
        for where in itertools.permutations(picks):
            yield 1.0, {"trials": [{"what": picks[0], "where": list(where), "delay": delay}]}


def _symbolic_search(inst, layouts) -> MemorylessResult:
    table = defaultdict(lambda: np.zeros(inst.num_actions))
    oracle = 0.0
    total_w = 0.0
    n = 0
    for w, layout in layouts:
        n += 1
        total_w += w
        inst.begin(layout)
        while not inst.done:
            vec = inst.action_rewards()
            table[inst._observe().tobytes()] += w * vec
            oracle += w * vec.max()
            inst.step(inst.oracle_action())
    memoryless = sum(v.max() for v in table.values())
    return MemorylessResult(inst.family, memoryless / total_w, oracle / total_w, n)


def _spot_search(inst) -> MemorylessResult:
    """Enumerate room 1 contents and the alteration for two fixed block positions.

    Inside room 2 the agent only sees room 2, so a memoryless agent's choice
    depends on the room 2 scene alone.
    """
    pool = list(inst.spec.stimulus_pool[:3])
    positions = [(inst.mid - 1, inst.room), (inst.mid + 1, inst.room)]
    spawn = (inst.mid, 1)
    table = defaultdict(lambda: np.zeros(len(positions)))
    oracle = 0.0
    total_w = 0.0
    n = 0
    for stimuli in itertools.product(pool, repeat=len(positions)):
        for changed in range(len(positions)):
            others = [s for s in pool if s != stimuli[changed]]
            for new in others:
                layout = inst.make_layout(spawn, 1, positions, stimuli, changed, new)
                w = 1.0 / len(others)
                vec = inst.decision_rewards(layout)
                table[inst.decision_key(layout)] += w * vec
                oracle += w * vec.max()
                total_w += w
                n += 1
    memoryless = sum(v.max() for v in table.values())
    return MemorylessResult(inst.family, memoryless / total_w, oracle / total_w, n)


MEMORY_FAMILIES = tables.PSYCHLAB + tables.SPOT_DIFF


def memoryless_search(family: str, seed: int = 0) -> MemorylessResult:
    """Best single-observation strategy versus the oracle at a tiny size."""
    family = tables.canonical_family(family)
    lv = Level.TRAIN_SMALL
    if family == "avm":
        inst = make_task(family, lv, seed, trials=3, distinct=2)
        return _symbolic_search(inst, _avm_layouts(inst))
    if family == "continuous_recognition":
        inst = make_task(family, lv, seed, trials=3, pool_size=3)
        return _symbolic_search(inst, _cr_layouts(inst))
    if family == "change_detection":
        inst = make_task(family, lv, seed, trials=1, cells=2, pool_size=2, delays=(1,))
        return _symbolic_search(inst, _cd_layouts(inst))
    if family == "what_then_where":
        inst = make_task(family, lv, seed, trials=1, pool_size=4, delays=(1,))
        return _symbolic_search(inst, _wtw_layouts(inst))
    if family in tables.SPOT_DIFF:
        return _spot_search(make_task(family, lv, seed))
    raise KeyError(f"no memoryless analysis for {family!r}")
