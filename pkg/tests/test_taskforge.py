from collections import deque

import numpy as np
import pytest

from memrecall import taskforge as tf
from memrecall.taskforge import FAMILIES, LEVEL_ORDER, PSYCHLAB, Level, make_task
from memrecall.taskforge import gridworld as gw
from memrecall.taskforge import psychlab as pl
from memrecall.taskforge import tables

S, I, L, X = Level.TRAIN_SMALL, Level.HOLDOUT_INTERPOLATE, Level.TRAIN_LARGE, Level.HOLDOUT_EXTRAPOLATE


# tables and splits


def test_scale_tables_match_published_values():
    assert tf.scale_for("change_detection", S) == (2, 4, 8)
    assert tf.scale_for("change_detection", X) == (130, 150, 200, 250)
    assert tf.scale_for("transitive_inference", X) == 8
    assert tf.scale_for("spot_diff_multi_object", I) == (4,)
    assert [tf.scale_for("avm", lv) for lv in (S, I, L, X)] == [50, 40, 50, 75]
    assert [tf.scale_for("continuous_recognition", lv) for lv in (S, I, L, X)] == [50, 40, 50, 75]
    assert [tf.scale_for("spot_diff_basic", lv) for lv in (S, I, L, X)] == [0, 5, 10, 15]
    assert [tf.scale_for("invisible_goal_empty", lv) for lv in (S, I, L, X)] == [10, 15, 20, 25]
    assert [tf.scale_for("visible_goal_maze", lv) for lv in (S, I, L, X)] == [11, 15, 21, 27]
    assert [tf.scale_for("transitive_inference", lv) for lv in (S, I, L, X)] == [5, 6, 7, 8]
    assert tables.CD_COLORS[0] == ("amethyst", "caramel", "honeydew", "jade", "mallow")


def test_make_task_draws_level_scale():
    assert make_task("change_detection", S, 0).delays == (2, 4, 8)
    assert make_task("transitive_inference", X, 0).length == 8
    inst = make_task("spot_diff_multi_object", I, 0)
    layout = inst._sample_layout(np.random.default_rng(0))
    assert len(layout["positions"]) == 4


@pytest.mark.parametrize("family", FAMILIES)
def test_stimulus_pools_disjoint(family):
    train = set(tf.pool_for(family, S)) | set(tf.pool_for(family, L))
    holdout = set(tf.pool_for(family, I)) | set(tf.pool_for(family, X))
    assert train and holdout and not train & holdout


def _key(v):
    return min(v) if isinstance(v, tuple) else v


@pytest.mark.parametrize("family", FAMILIES)
def test_scales_monotone_except_trial_tables(family):
    vals = [_key(tf.scale_for(family, lv)) for lv in LEVEL_ORDER]
    if family in ("avm", "continuous_recognition"):
        assert vals == [50, 40, 50, 75]
    else:
        assert vals == sorted(vals) and len(set(vals)) == 4, vals


def test_image_split_even_odd():
    train, holdout = tables.IMAGE_POOL
    assert all(int(s.split("_")[1]) % 2 == 0 for s in train)
    assert all(int(s.split("_")[1]) % 2 == 1 for s in holdout)
    assert tables.DIGITS == (tuple(f"digit_{i}" for i in range(5)), tuple(f"digit_{i}" for i in range(5, 10)))


def test_codes_are_distinct_and_reembedded_per_seed():
    a, b = make_task("avm", S, 0), make_task("avm", S, 1)
    codes = {k: v.tobytes() for k, v in a.codes.items()}
    assert len(set(codes.values())) == len(codes)
    assert any(a.codes[k].tobytes() != b.codes[k].tobytes() for k in a.codes)


def test_unknown_family_and_bad_action():
    with pytest.raises(KeyError):
        make_task("pong", S, 0)
    inst = make_task("avm", S, 0)
    inst.reset()
    with pytest.raises(ValueError):
        inst.step(5)


@pytest.mark.parametrize("family", FAMILIES)
def test_action_set_and_obs_spec(family):
    inst = make_task(family, S, 0)
    obs = inst.reset()
    assert inst.num_actions == (5 if family in PSYCHLAB else 8)
    assert obs.shape == (inst.obs_spec.size,)


# determinism and solvability


def _trace(family, level, seed, policy_seed=None):
    inst = make_task(family, level, seed)
    pol = tf.OraclePolicy(family) if policy_seed is None else tf.RandomPolicy(family, policy_seed)
    out = [inst.reset().tobytes()]
    for _ in range(60):
        if inst.done:
            break
        res = inst.step(pol(inst))
        out.append((res.observation.tobytes(), res.reward))
    return out


@pytest.mark.parametrize("family", FAMILIES)
def test_episode_is_determined_by_family_level_seed(family):
    assert _trace(family, L, 3) == _trace(family, L, 3)
    assert _trace(family, L, 3, policy_seed=1) == _trace(family, L, 3, policy_seed=1)
    assert _trace(family, L, 3) != _trace(family, L, 4)


@pytest.mark.parametrize("family", FAMILIES)
def test_oracle_reaches_95_percent_of_analytic_max(family):
    for level in LEVEL_ORDER:
        inst = make_task(family, level, 0, stream=7)
        got, best = 0.0, 0.0
        for _ in range(3):
            inst.reset()
            best += inst.analytic_max()
            while not inst.done:
                inst.step(inst.oracle_action())
            got += inst.episode_reward
        assert got >= 0.95 * best, (family, level, got, best)


@pytest.mark.parametrize("family", tf.MEMORY_FAMILIES)
def test_memoryless_policy_is_strictly_worse(family):
    res = tf.memoryless_search(family)
    assert res.memoryless < res.oracle - 1e-9, res


# per-family examples


def test_avm_first_presentation_follows_prompt():
    inst = make_task("avm", S, 0)
    inst.begin({"stimuli": list(inst.spec.stimulus_pool[:2]), "sequence": [0, 1, 0] + [1] * 47,
                "directions": [pl.UP, pl.LEFT]})
    obs = inst._observe()
    assert obs[inst.code_dim + pl.UP] == 1.0
    assert inst.step(pl.UP).reward == 1.0
    inst.step(pl.LEFT)
    # repeat showing hides the prompt
    assert inst._observe()[inst.code_dim:].sum() == 0.0
    assert inst.step(pl.UP).reward == 1.0


def test_transitive_inference_challenge_rewards_higher_item():
    for pick_higher in (True, False):
        inst = make_task("transitive_inference", S, 0)
        inst.reset()
        while not inst.challenge:
            inst.step(inst.oracle_action())
        assert sorted(inst.items) == [1, 3]  # B versus D on the chain A<B<C<D<E
        target = inst.items.index(3 if pick_higher else 1)
        total = 0.0
        while not inst.done:
            total += inst.step(inst.planners[target].action(inst.pos, inst.heading)).reward
        assert total == (1.0 if pick_higher else 0.0)


def test_change_detection_oracle_is_optimal_on_all_pattern_pairs():
    inst = make_task("change_detection", S, 0, trials=1, cells=2, pool_size=3, delays=(1,))
    pool = list(inst._pool())
    pairs = 0
    for a in pool:
        for b in pool:
            for c in pool:
                for d in pool:
                    first, second = [a, b], [c, d]
                    if sum(x != y for x, y in zip(first, second)) > 1:
                        continue  # at most one cell changes
                    inst.begin({"trials": [{"first": first, "second": second,
                                            "changed": first != second, "delay": 1}]})
                    total = 0.0
                    while not inst.done:
                        if inst.phase == "answer":
                            assert inst.action_rewards()[inst.oracle_action()] == inst.action_rewards().max()
                        total += inst.step(inst.oracle_action()).reward
                    assert total == 1.0
                    pairs += 1
    assert pairs == 9 + 9 * 2 * 2


def test_identical_patterns_answer_same():
    inst = make_task("change_detection", S, 0, trials=1, delays=(2,))
    pat = list(inst._pool()[:4])
    inst.begin({"trials": [{"first": pat, "second": pat, "changed": False, "delay": 2}]})
    for _ in range(3):
        inst.step(pl.NOOP)
    assert inst.step(pl.LEFT).reward == 1.0


def _bfs_steps(walls, start, heading, goal):
    """Breadth-first search over (cell, heading) with the eight-action moves."""
    seen = {(start, heading): 0}
    queue = deque([(start, heading)])
    while queue:
        pos, h = queue.popleft()
        if pos == goal:
            return seen[(pos, h)]
        for a in range(8):
            nh, d = gw.action_effect(h, a)
            npos = pos
            if d is not None:
                cand = (pos[0] + gw.HEADINGS[d][0], pos[1] + gw.HEADINGS[d][1])
                if not walls[cand]:
                    npos = cand
            if (npos, nh) not in seen:
                seen[(npos, nh)] = seen[(pos, h)] + 1
                queue.append((npos, nh))
    return -1


def test_navigation_oracle_matches_bfs_shortest_paths():
    inst = make_task("invisible_goal_empty", S, 0)
    assert inst.walls.shape == (12, 12)
    inst.reset()
    trials = 0
    start = (inst.pos, inst.heading)
    steps = 0
    while not inst.done:
        res = inst.step(inst.oracle_action())
        steps += 1
        if res.reward:
            assert steps == _bfs_steps(inst.walls, start[0], start[1], inst.goal)
            assert res.info["time_to_goal"] == steps
            trials += 1
            start, steps = (inst.pos, inst.heading), 0
    assert trials >= 5


def test_maze_is_perfect():
    walls = gw.perfect_maze(11, np.random.default_rng(0))
    free = np.argwhere(~walls)
    dist = gw.cell_distances(walls, tuple(free[0]))
    assert (dist[~walls] >= 0).all()
    # a spanning tree on the free cells: edges = nodes - 1
    edges = sum(1 for r, c in free for dr, dc in ((0, 1), (1, 0)) if not walls[r + dr, c + dc])
    assert edges == len(free) - 1


def test_spawn_regions_follow_split():
    inst = make_task("invisible_goal_empty", S, 0)
    for seed in range(5):
        layout = inst._sample_layout(np.random.default_rng(seed))
        r, c = layout["goal"]
        assert (r < 6) == (c < 6)  # northwest or southeast quadrant
    hold = make_task("visible_goal_maze", I, 0)
    for seed in range(5):
        assert hold._sample_layout(np.random.default_rng(seed))["goal"][0] >= hold.size / 2


# random baselines


@pytest.mark.parametrize("family", ["continuous_recognition", "change_detection"])
def test_binary_answer_random_is_half(family):
    inst = make_task(family, S, 0)
    est = tf.random_baseline(family, S, 0, episodes=40)
    half = inst.trials / 2
    assert abs(est.mean - half) <= 3 * est.stderr, (est, half)


def test_avm_random_is_one_fifth():
    est = tf.random_baseline("avm", S, 0, episodes=60)
    assert abs(est.mean - 50 / 5) <= 3 * est.stderr, est


def test_empty_arena_random_small_positive():
    est = tf.random_baseline("invisible_goal_empty", S, 0, episodes=20)
    oracle = tf.oracle_baseline("invisible_goal_empty", S, 0, episodes=5)
    assert 0 < est.mean < oracle.mean
