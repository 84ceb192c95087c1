"""Acceptance criteria, one test each.  Every test prints a PASS/FAIL line and
the terminal summary repeats them in order.  Criteria 7 to 9 train agents and
carry the ``slow`` marker; deselect them with ``-m "not slow"``."""
import itertools

import numpy as np
import pytest
from test_epmem import oracle_read
from test_harness import expected_ids
from test_learner import brute_vtrace, make_traj

from memrecall import checks, epmem
from memrecall import diffcore as dc
from memrecall import learner as ln
from memrecall import taskforge as tf
from memrecall.diffcore import ParameterSet, Tensor
from memrecall.harness import (ALL_CONFIGS, AblationConfig, RunRecord, ScoreReport, compute_baselines, defaults_for,
                               emit_report, normalize, normalized_score, parse_report_csv, record_from_results,
                               score_record, train_run)
from memrecall.taskforge import FAMILIES, LEVEL_ORDER, Level, make_task

MINUTE = 60.0


def test_criterion_1_gradient_integrity(acceptance):
    with acceptance(1, "gradient integrity", 1 * MINUTE) as c:
        for name, report in checks.run_all(0).items():
            c.check(report.max_error < 1e-4, f"{name} max relative error {report.max_error:.2e}")
            c.note(f"{name} {report.max_error:.1e}")
        c.check(checks.cpc.__defaults__[1:] == (6, 3), "CPC check must use T=6, N=3")
        c.check(checks.rl.__defaults__[1] == 4, "rl_loss check must use a length-4 trajectory")


def test_criterion_2_jumpy_contract(acceptance):
    from test_learner import Corridor, _unroll_read_grad, agent_for

    with acceptance(2, "jumpy-backprop contract", 1 * MINUTE) as c:
        e, h, k = 3, 4, 2
        rng = np.random.default_rng(5)
        params = ParameterSet(epmem.init_memory_params(rng, e, h, k, np.float64))
        buf = epmem.EpisodicBuffer(8, e, h, k, batch=1, dtype=np.float64, rows=2)
        srcs = []
        for _ in range(3):
            p = Tensor(rng.normal(size=(1, e)), requires_grad=True)
            v = Tensor(rng.normal(size=(1, h)), requires_grad=True)
            epmem.write(buf, p * 1.0, v * 1.0, params, jumpy=True)
            srcs += [p, v]
        q = epmem.query(Tensor(rng.normal(size=(1, e))), Tensor(rng.normal(size=(1, h))), params)
        loss = dc.sum(dc.square(epmem.read(buf, q, params, k=3).m))
        proj = [params[n] for n in ("mem/key_w", "mem/key_b", "mem/query_w", "mem/query_b")]
        grads = dc.grad(loss, srcs + proj)
        c.check(all(np.all(g == 0.0) for g in grads[:len(srcs)]), "stored (p, v) received gradient")
        for name, g in zip(("W_k", "b_k", "W_q", "b_q"), grads[len(srcs):]):
            c.check(np.abs(g).sum() > 0, f"{name} gradient is zero")
        jumpy = agent_for(AblationConfig("lstm", True, "cpc"), Corridor)
        nojumpy = agent_for(AblationConfig("lstm", True, "cpc", jumpy=False), Corridor)
        ap = jumpy.init_params(7)
        c.check(np.abs(_unroll_read_grad(jumpy, ap, link=False)).sum() == 0.0, "jumpy write path not detached")
        c.check(np.abs(_unroll_read_grad(nojumpy, ap, link=True)).sum() > 0.0, "no-jumpy write path has no gradient")


def test_criterion_3_memory_oracle(acceptance):
    with acceptance(3, "episodic memory oracle", 1 * MINUTE) as c:
        e, h, k_dim = 3, 4, 2
        rng = np.random.default_rng(2024)
        worst, stale_reads = 0.0, 0
        for trial in range(1000):
            params = ParameterSet(epmem.init_memory_params(np.random.default_rng(trial), e, h, k_dim, np.float64))
            cap = int(rng.integers(1, 12))
            buf = epmem.EpisodicBuffer(cap, e, h, k_dim, batch=1, dtype=np.float64, rows=2)
            for _ in range(int(rng.integers(0, 20))):
                epmem.write(buf, Tensor(rng.integers(-1, 2, size=(1, e)).astype(float)),
                            Tensor(rng.normal(size=(1, h))), params)
            if trial % 2:  # parameter update after the writes: cached keys go stale
                params["mem/key_w"].data[:] += rng.normal(scale=0.3, size=params["mem/key_w"].shape)
                params["mem/key_b"].data[:] += rng.normal(scale=0.3, size=params["mem/key_b"].shape)
                stale_reads += 1
            q = rng.normal(size=k_dim)
            k = int(rng.integers(1, 11))
            r = epmem.read(buf, Tensor(q[None]), params, k=k)
            slots = [j for j in range(buf.rows) if buf.valid[0, j]]
            if slots:
                order, _, m = oracle_read(buf.p[0, slots], buf.v[0, slots], buf.k[0, slots],
                                          buf.write_step[0, slots], q, params["mem/key_w"].data,
                                          params["mem/key_b"].data, k, 1e-3)
                want = [slots[j] for j in order]
            else:
                want, m = [], np.zeros(h)
            got = [int(i) for i in r.neighbors[0] if i >= 0]
            c.check(got == want, f"trial {trial}: neighbours {got} != {want}")
            worst = max(worst, float(np.abs(r.m.data[0] - m).max()))
        c.check(worst <= 1e-10, f"max |m - oracle| = {worst:.2e}")
        c.note(f"max |m - oracle| {worst:.1e}, {stale_reads} stale-key reads")


def test_criterion_4_vtrace_oracle(acceptance):
    with acceptance(4, "V-trace oracle", 1 * MINUTE) as c:
        rng = np.random.default_rng(4)
        worst, cases = 0.0, 0
        clips = [(1.0, 1.0), (2.0, 1.5), (1e9, 1e9)]
        for t_len, gamma, clip, _ in itertools.product(range(1, 6), (0.0, 0.5, 0.9), clips, range(8)):
            blog, tlog = rng.normal(size=(t_len, 3)), rng.normal(size=(t_len, 3))
            actions = rng.integers(0, 3, size=t_len)
            rewards, values = rng.normal(size=t_len), rng.normal(size=t_len + 1)
            dones = rng.random(t_len) < 0.2
            vs, adv = ln.vtrace_targets(make_traj(actions, rewards, dones, blog), values, tlog,
                                        ln.VTraceConfig(gamma, *clip))
            lp_t = tlog - np.log(np.exp(tlog).sum(1, keepdims=True))
            lp_b = blog - np.log(np.exp(blog).sum(1, keepdims=True))
            ratios = np.exp(lp_t - lp_b)[np.arange(t_len), actions]
            want_vs, want_adv = brute_vtrace(list(values), list(rewards), list(dones), list(ratios), gamma, *clip)
            worst = max(worst, float(np.abs(vs - want_vs).max()), float(np.abs(adv - want_adv).max()))
            # on-policy: the n-step bootstrapped return
            vs_on, _ = ln.vtrace_targets(make_traj(actions, rewards, dones, tlog), values, tlog,
                                         ln.VTraceConfig(gamma, *clip))
            disc = gamma * (1.0 - dones)
            ret = values[t_len]
            nstep = np.zeros(t_len)
            for t in range(t_len - 1, -1, -1):
                ret = rewards[t] + disc[t] * ret
                nstep[t] = ret
            c.check(np.allclose(vs_on, nstep, rtol=0, atol=1e-12), f"on-policy mismatch T={t_len} gamma={gamma}")
            cases += 1
        c.check(worst <= 1e-10, f"max deviation from term expansion {worst:.2e}")
        c.note(f"{cases} cases, max deviation {worst:.1e}")


def test_criterion_5_score_pipeline(acceptance):
    with acceptance(5, "score pipeline", 1 * MINUTE) as c:
        c.check(float(normalize(2.5, 2.5, 7.0)) == 0.0, "R_random does not map to 0")
        c.check(float(normalize(7.0, 2.5, 7.0)) == 100.0, "R_oracle does not map to 100")
        c.check(float(normalize(50.00, 0.06, 50.00)) == 100.0, "AVM row does not give 100.0")
        # train peaks late, holdout peaks early: holdout must be read at the train peak
        train = [[1.0, 2.0, 3.0, 9.0, 4.0], [0.0, 8.0, 1.0, 1.0, 1.0]]
        hold = [[9.0, 1.0, 1.0, 2.0, 1.0], [1.0, 3.0, 9.0, 9.0, 9.0]]
        rec = RunRecord("lstm", "avm", [0, 1], list(range(5)),
                        {"train": train, "interpolate": hold, "extrapolate": hold}, episodes_per_point=1)
        row = normalized_score(rec, 0.0, 10.0, alpha=1.0, window=1)
        c.check(row.snapshot_index == [3, 1], f"snapshot indices {row.snapshot_index}")
        c.check(row.per_seed["interpolate"] == [20.0, 30.0], f"holdout scores {row.per_seed['interpolate']}")


def test_criterion_6_task_suite(acceptance):
    with acceptance(6, "task-suite integrity", 10 * MINUTE) as c:
        for family in FAMILIES:
            train = set(tf.pool_for(family, Level.TRAIN_SMALL)) | set(tf.pool_for(family, Level.TRAIN_LARGE))
            hold = set(tf.pool_for(family, Level.HOLDOUT_INTERPOLATE)) | set(tf.pool_for(family, Level.HOLDOUT_EXTRAPOLATE))
            c.check(train and hold and not train & hold, f"{family}: stimulus pools overlap")
            scales = [tf.scale_for(family, lv) for lv in LEVEL_ORDER]
            key = [min(s) if isinstance(s, tuple) else s for s in scales]
            if family in ("avm", "continuous_recognition"):
                c.check(key == [50, 40, 50, 75], f"{family}: trial table {key}")
            else:
                c.check(key == sorted(key) and len(set(key)) == 4, f"{family}: scales {key} not monotone")
            for level in LEVEL_ORDER:
                c.check(_rollout(family, level, 3) == _rollout(family, level, 3), f"{family}/{level.value}: nondeterministic")
                inst = make_task(family, level, 0, stream=11)
                got = best = 0.0
                for _ in range(2):
                    inst.reset()
                    best += inst.analytic_max()
                    while not inst.done:
                        inst.step(inst.oracle_action())
                    got += inst.episode_reward
                c.check(got >= 0.95 * best, f"{family}/{level.value}: oracle {got} < 95% of {best}")
        for family in tf.MEMORY_FAMILIES:
            res = tf.memoryless_search(family)
            c.check(res.memoryless < res.oracle, f"{family}: memoryless {res.memoryless} reaches oracle {res.oracle}")


def _rollout(family, level, seed):
    inst = make_task(family, level, seed)
    pol = tf.RandomPolicy(family, seed)
    out = [inst.reset().tobytes()]
    while not inst.done and len(out) < 200:
        res = inst.step(pol(inst))
        out.append((res.observation.tobytes(), res.reward))
    return out


# training criteria


def _scored(family, config, settings, seeds):
    results = [train_run(family, AblationConfig.parse(config), s, settings) for s in seeds]
    record = record_from_results(results)
    return results, score_record(record, compute_baselines(family, settings), settings)


@pytest.mark.slow
def test_criterion_7_memory_helps_on_avm(acceptance):
    with acceptance(7, "directional learning on AVM", 60 * MINUTE) as c:
        settings = defaults_for("avm")
        settings.task["trials"] = 10
        settings.train["budget"] = 200_000
        rows = {}
        for config in ("lstm_mem", "ff"):
            results, rows[config] = _scored("avm", config, settings, (0, 1, 2))
            c.check(not any(r.failed for r in results), f"{config}: failed seeds")
        mem, ff = rows["lstm_mem"].scores, rows["ff"].scores
        c.note(f"LSTM+MEM train {mem['train'][0]:.1f} interp {mem['interpolate'][0]:.1f}; "
               f"FF train {ff['train'][0]:.1f} interp {ff['interpolate'][0]:.1f}")
        c.check(mem["train"][0] >= 80.0, f"LSTM+MEM train {mem['train'][0]:.1f} < 80")
        c.check(ff["train"][0] <= 40.0, f"FF train {ff['train'][0]:.1f} > 40")
        gap = mem["interpolate"][0] - ff["interpolate"][0]
        c.check(gap >= 20.0, f"interpolate gap {gap:.1f} < 20")


@pytest.mark.slow
def test_criterion_8_generalization_gap_on_transitive_inference(acceptance):
    with acceptance(8, "generalization gap on transitive inference", 60 * MINUTE) as c:
        settings = defaults_for("transitive_inference")
        results, row = _scored("transitive_inference", "mra", settings, (0, 1, 2))
        c.check(not any(r.failed for r in results), "failed seeds")
        tr, it, ex = (row.scores[k][0] for k in ("train", "interpolate", "extrapolate"))
        c.note(f"MRA train {tr:.1f} interp {it:.1f} extrap {ex:.1f}")
        c.check(tr >= it - 5.0, f"train {tr:.1f} < interpolate {it:.1f} - 5")
        c.check(it >= ex - 5.0, f"interpolate {it:.1f} < extrapolate {ex:.1f} - 5")


@pytest.mark.slow
def test_criterion_9_ablation_matrix_smoke(acceptance, tmp_path):
    with acceptance(9, "ablation matrix smoke", 15 * MINUTE) as c:
        for cfg, family in zip(ALL_CONFIGS, itertools.cycle(FAMILIES)):
            settings = defaults_for(family)
            settings.train.update(budget=2000, eval_points=2, eval_episodes=2)
            settings.score["baseline_episodes"] = 4
            run_dir = tmp_path / family / cfg.name / "0"
            res = train_run(family, cfg, 0, settings, run_dir)
            c.check(not res.failed, f"{cfg.name}/{family}: {res.error}")
            row = score_record(record_from_results([res]), compute_baselines(family, settings), settings)
            paths = emit_report(ScoreReport([row]), tmp_path / "reports" / cfg.name)
            parsed = parse_report_csv(paths["csv"])
            c.check(len(parsed) == 3 and all(np.isfinite(r["score"]) for r in parsed), f"{cfg.name}: bad report")
            ids = set(dc.load_checkpoint(run_dir / "checkpoint.mra").ids())
            grid = family not in tf.PSYCHLAB
            want = expected_ids(cfg, settings.learner["cpc_steps"], grid)
            c.check(ids == want, f"{cfg.name}: parameter ids differ by {sorted(ids ^ want)}")
