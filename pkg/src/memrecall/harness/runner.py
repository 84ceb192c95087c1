"""Training runs, frozen-parameter evaluation and the ablation matrix."""
from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import auxloss, controller, epmem, kernels, learner
from .. import diffcore as dc
from ..diffcore import NumericError, save_checkpoint
from ..taskforge import Level, make_task, oracle_baseline, random_baseline, tables
from .ablation import AblationConfig
from .config import RunSettings, defaults_for
from .scoring import LEVEL_KEYS, RunRecord, ScoreRow, normalized_score

EVAL_STREAM = 10_000
BASELINE_STREAM = 20_000
EVAL_LEVELS = {
    "train": (Level.TRAIN_SMALL, Level.TRAIN_LARGE),
    "interpolate": (Level.HOLDOUT_INTERPOLATE,),
    "extrapolate": (Level.HOLDOUT_EXTRAPOLATE,),
}


class TrainLevelMixer:
    """Training environment that samples the small or large level per episode."""

    def __init__(self, family: str, seed: int, stream: int, overrides: dict | None = None):
        overrides = overrides or {}
        self.levels = [make_task(family, Level.TRAIN_SMALL, seed, stream, **overrides),
                       make_task(family, Level.TRAIN_LARGE, seed, stream, **overrides)]
        self.rng = np.random.default_rng([seed, stream, 31337])
        self.current = self.levels[0]
        self.num_actions = self.current.num_actions
        self.obs_spec = self.current.obs_spec

    def reset(self):
        self.current = self.levels[int(self.rng.integers(2))]
        return self.current.reset()

    def step(self, action):
        return self.current.step(action)

    @property
    def done(self):
        return self.current.done


def build_agent(family: str, ablation: AblationConfig, settings: RunSettings):
    probe = make_task(family, Level.TRAIN_SMALL, 0, **settings.task)
    lp = settings.learner
    model = controller.ModelConfig(**settings.model)
    agent = learner.Agent(ablation, probe.obs_spec, probe.num_actions, model,
                          auxloss.CpcConfig(int(lp["cpc_steps"]), float(lp["cpc_weight"])),
                          auxloss.RecConfig(lp["rec_image"], lp["rec_action"], lp["rec_reward"]))
    return agent


def build_learner(agent, seed: int, settings: RunSettings, dump_dir=None) -> learner.Learner:
    lp = settings.learner
    params = agent.init_params(seed)
    clip = lp["clip_norm"] if lp["clip_norm"] and lp["clip_norm"] > 0 else None
    return learner.Learner(
        agent, params,
        learner.OptimizerConfig(lp["optimizer"], lp["learning_rate"], clip_norm=clip),
        learner.VTraceConfig(lp["discount"], lp["rho_bar"], lp["c_bar"]),
        learner.LossConfig(lp["entropy_cost"], lp["baseline_cost"]),
        dump_dir=dump_dir,
    )


def evaluate(agent, snapshot, family: str, level, seed: int, episodes: int, overrides: dict | None = None,
             stream: int = EVAL_STREAM) -> np.ndarray:
    """Greedy episode rewards with frozen parameters, one environment per episode."""
    envs = [make_task(family, level, seed, stream + i, **(overrides or {})) for i in range(episodes)]
    n = len(envs)
    obs = np.stack([e.reset() for e in envs]).astype(agent.dtype)
    state = agent.initial_state(n)
    buffer = agent.new_buffer(n)
    totals = np.zeros(n)
    active = np.ones(n, dtype=bool)
    with dc.no_grad():
        while active.any():
            out = agent.step(snapshot, obs, state, buffer)
            state = out.state
            actions = out.logits.data.argmax(axis=-1)
            for i in np.flatnonzero(active):
                res = envs[i].step(int(actions[i]))
                totals[i] += res.reward
                obs[i] = res.observation
                if res.done:
                    active[i] = False
    return totals


def evaluate_levels(agent, snapshot, family, seed, episodes, overrides=None) -> dict:
    out = {}
    for key, levels in EVAL_LEVELS.items():
        per = max(1, episodes // len(levels))
        out[key] = float(np.mean(np.concatenate(
            [evaluate(agent, snapshot, family, lv, seed, per, overrides) for lv in levels])))
    return out


@dataclass
class SeedResult:
    family: str
    config: str
    seed: int
    steps: list = field(default_factory=list)
    curves: dict = field(default_factory=lambda: {k: [] for k in LEVEL_KEYS})
    train_episodes: int = 0
    learner_steps: int = 0
    failed: bool = False
    error: str = ""
    wall_clock: float = 0.0
    param_ids: list = field(default_factory=list)
    run_dir: str | None = None

    @property
    def episodes_per_point(self) -> float:
        return self.train_episodes / max(1, len(self.steps))


def run_directory(root, family: str, config: AblationConfig | str, seed: int) -> Path:
    name = config.name if isinstance(config, AblationConfig) else str(config)
    return Path(root) / family / name / str(seed)


def train_run(family: str, ablation: AblationConfig, seed: int, settings: RunSettings | None = None,
              run_dir=None, progress=None) -> SeedResult:
    """Train one (family, config, seed) for ``settings.train['budget']`` environment steps.

    Actors and the learner alternate round-robin unless ``threaded`` is set.
    Evaluation on the three level types happens at evenly spaced points.
    """
    family = tables.canonical_family(family)
    settings = settings or defaults_for(family)
    tp, lp = settings.train, settings.learner
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
    agent = build_agent(family, ablation, settings)
    lrn = build_learner(agent, seed, settings, dump_dir=run_dir)
    result = SeedResult(family, ablation.name, seed, param_ids=sorted(lrn.params.ids()),
                        run_dir=str(run_dir) if run_dir else None)
    batch, unroll = int(lp["batch_size"]), int(lp["unroll"])
    envs = [TrainLevelMixer(family, seed, i, settings.task) for i in range(batch)]
    actor = learner.ActorWorker(envs, agent, unroll, seed=seed)
    budget = int(tp["budget"])
    points = max(1, int(tp["eval_points"]))
    eval_every = budget / points
    metrics = learner.MetricsWriter(run_dir / "metrics.csv") if run_dir else None
    eval_log = open(run_dir / "eval.csv", "w") if run_dir else None
    if eval_log:
        eval_log.write("step,level,reward\n")
    start = time.perf_counter()
    frames, next_eval = 0, 0.0

    def do_eval():
        vals = evaluate_levels(agent, lrn.snapshot(), family, seed, int(tp["eval_episodes"]), settings.task)
        result.steps.append(frames)
        for k in LEVEL_KEYS:
            result.curves[k].append(vals[k])
            if eval_log:
                eval_log.write(f"{frames},{k},{vals[k]:.9g}\n")
        if eval_log:
            eval_log.flush()
        if progress:
            progress(f"{family}/{ablation.name}/{seed} step {frames}: "
                     + " ".join(f"{k}={vals[k]:.3f}" for k in LEVEL_KEYS))

    def consume(trajs):
        nonlocal frames, next_eval
        if frames >= next_eval:
            do_eval()
            next_eval += eval_every
        m = lrn.train_step(trajs)
        frames += batch * unroll
        result.learner_steps += 1
        rets = [r for tr in trajs for r in tr.episode_returns]
        result.train_episodes += len(rets)
        if metrics:
            metrics.write(frames, float(np.mean(rets)) if rets else None, m)
        ce = int(tp.get("checkpoint_every") or 0)
        if run_dir is not None and ce > 0 and result.learner_steps % ce == 0:
            save_checkpoint(run_dir / "checkpoint.mra", lrn.params)

    try:
        if tp.get("threaded"):
            _threaded_loop(actor, lrn, budget, batch * unroll, consume)
        else:
            while frames < budget:
                consume(actor.rollout(lrn.snapshot()))
        do_eval()
    except NumericError as exc:
        result.failed = True
        result.error = str(exc)
    finally:
        result.wall_clock = time.perf_counter() - start
        if metrics:
            metrics.close()
        if eval_log:
            eval_log.close()
    if run_dir is not None:
        save_checkpoint(run_dir / "checkpoint.mra", lrn.params)
        meta = {
            "family": family, "config": ablation.name, "label": ablation.label, "seed": seed,
            "settings": settings.to_dict(), "steps": result.steps, "curves": result.curves,
            "train_episodes": result.train_episodes, "learner_steps": result.learner_steps,
            "failed": result.failed, "error": result.error, "wall_clock": result.wall_clock,
            "param_ids": result.param_ids, "kernel_backend": kernels.BACKEND,
        }
        (run_dir / "run.json").write_text(json.dumps(meta, indent=2))
    return result


def _threaded_loop(actor, lrn, budget, frames_per_batch, consume):
    """Actor in a background thread feeding a bounded queue; the learner publishes snapshots."""
    q: queue.Queue = queue.Queue(maxsize=2)
    stop = threading.Event()
    latest = {"snap": lrn.snapshot()}
    errors = []

    def work():
        try:
            while not stop.is_set():
                trajs = actor.rollout(latest["snap"])
                while not stop.is_set():
                    try:
                        q.put(trajs, timeout=0.1)
                        break
                    except queue.Full:
                        continue
        except Exception as exc:  # surfaced in the learner thread
            errors.append(exc)
            stop.set()

    th = threading.Thread(target=work, daemon=True)
    th.start()
    done = 0
    try:
        while done < budget:
            if errors:
                raise errors[0]
            try:
                trajs = q.get(timeout=0.5)
            except queue.Empty:
                continue
            consume(trajs)
            latest["snap"] = lrn.snapshot()
            done += frames_per_batch
    finally:
        stop.set()
        th.join(timeout=10)


# --------------------------------------------------------------------------
# baselines and the matrix


def compute_baselines(family: str, settings: RunSettings, seed: int = 0) -> dict:
    """{level key: (R_random, R_oracle)}; the train entry averages small and large."""
    family = tables.canonical_family(family)
    m = int(settings.score["baseline_episodes"])
    out = {}
    for key, levels in EVAL_LEVELS.items():
        rnd = [random_baseline(family, lv, seed, m, **settings.task).mean for lv in levels]
        orc = [oracle_baseline(family, lv, seed, m, **settings.task).mean for lv in levels]
        out[key] = (float(np.mean(rnd)), float(np.mean(orc)))
    return out


def record_from_results(results: list[SeedResult]) -> RunRecord:
    ok = [r for r in results if not r.failed and r.steps]
    first = results[0]
    curves = {k: [list(r.curves[k]) for r in ok] for k in LEVEL_KEYS}
    if ok:
        n = min(len(r.steps) for r in ok)
        curves = {k: [c[:n] for c in v] for k, v in curves.items()}
        steps = ok[0].steps[:n]
        epp = float(np.mean([r.episodes_per_point for r in ok]))
    else:
        steps, epp = [], None
    return RunRecord(first.config, first.family, [r.seed for r in ok], steps, curves, epp,
                     failed_seeds=[r.seed for r in results if r.failed],
                     meta={"wall_clock": [r.wall_clock for r in results],
                           "errors": {r.seed: r.error for r in results if r.failed},
                           "run_dirs": [r.run_dir for r in results]})


def score_record(record: RunRecord, baselines: dict, settings: RunSettings) -> ScoreRow | None:
    if not record.seeds:
        return None
    r_random = {k: baselines[k][0] for k in LEVEL_KEYS}
    r_oracle = {k: baselines[k][1] for k in LEVEL_KEYS}
    return normalized_score(record, r_random, r_oracle, settings.score["alpha"], settings.score["window"])


def run_matrix(families, configs, seeds=(0, 1, 2), budget: int | None = None, out_dir=None,
               overrides: dict | None = None, progress=None):
    """Train every (family, config, seed), then score.  Returns (records, ScoreReport)."""
    from .config import apply_overrides
    from .report import ScoreReport

    records, rows, failed = [], [], []
    baselines_all = {}
    for family in families:
        family = tables.canonical_family(family)
        settings = defaults_for(family)
        if overrides:
            apply_overrides(settings, overrides)
        if budget is not None:
            settings.train["budget"] = int(budget)
        baselines = compute_baselines(family, settings)
        baselines_all[family] = baselines
        for cfg in configs:
            cfg = cfg if isinstance(cfg, AblationConfig) else AblationConfig.parse(cfg)
            results = []
            for seed in seeds:
                rd = run_directory(out_dir, family, cfg, seed) if out_dir is not None else None
                results.append(train_run(family, cfg, seed, settings, rd, progress))
            rec = record_from_results(results)
            records.append(rec)
            row = score_record(rec, baselines, settings)
            if row is not None:
                rows.append(row)
            if rec.failed_seeds:
                failed.append({"family": family, "config": cfg.name, "seeds": rec.failed_seeds,
                               "errors": rec.meta["errors"]})
    report = ScoreReport(rows, baselines_all, failed, [
        {"family": r.family, "config": r.config, "seeds": r.seeds, "failed_seeds": r.failed_seeds,
         "wall_clock": r.meta["wall_clock"], "run_dirs": r.meta["run_dirs"],
         "episodes_per_point": r.episodes_per_point} for r in records])
    return records, report
