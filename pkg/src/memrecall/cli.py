"""Command-line entry point: train, eval, report, gradcheck and tasks."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import checks, kernels
from .diffcore import ContractError, load_checkpoint
from .harness import (AblationConfig, RunSettings, ScoreReport, compute_baselines, emit_report, evaluate,
                      load_settings, parse_overrides, record_from_results, run_directory, schema_text,
                      score_record, train_run)
from .harness.runner import SeedResult, build_agent
from .taskforge import (FAMILIES, LEVEL_ORDER, Level, OraclePolicy, RandomPolicy, canonical_family, make_task,
                        pool_for, scale_for)


def _parse_set(items) -> dict:
    """``section.key=value`` pairs, validated through the same schema as config files."""
    if not items:
        return {}
    text = defaultdict(list)
    for item in items:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ContractError(f"--set expects section.key=value, got {item!r}")
        name, value = item.split("=", 1)
        section, key = name.split(".", 1)
        text[section].append(f"{key} = {value}")
    return parse_overrides("\n".join(f"[{s}]\n" + "\n".join(lines) for s, lines in text.items()))


def cmd_train(args) -> int:
    settings = load_settings(args.family, args.config_file, _parse_set(args.set))
    if args.budget is not None:
        settings.train["budget"] = args.budget
    cfg = AblationConfig.parse(args.config)
    run_dir = run_directory(args.out, settings.family, cfg, args.seed)
    result = train_run(settings.family, cfg, args.seed, settings, run_dir,
                       progress=None if args.quiet else print)
    status = f"FAILED: {result.error}" if result.failed else "ok"
    print(f"{run_dir}: {result.learner_steps} updates, {result.train_episodes} episodes, "
          f"{result.wall_clock:.1f}s, {status}")
    return 1 if result.failed else 0


def _load_run(checkpoint: Path):
    meta_path = checkpoint.parent / "run.json"
    if not meta_path.exists():
        raise ContractError(f"no run.json next to {checkpoint}; cannot rebuild the agent")
    meta = json.loads(meta_path.read_text())
    settings = RunSettings(**meta["settings"])
    return meta, settings


def cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    meta, settings = _load_run(ckpt)
    cfg = AblationConfig.parse(meta["config"])
    agent = build_agent(meta["family"], cfg, settings)
    params = load_checkpoint(ckpt)
    level = Level.parse(args.level)
    seed = meta["seed"] if args.seed is None else args.seed
    rewards = evaluate(agent, params.snapshot(), meta["family"], level, seed, args.episodes, settings.task)
    mean = float(rewards.mean())
    err = float(rewards.std(ddof=1) / np.sqrt(len(rewards))) if len(rewards) > 1 else 0.0
    print(json.dumps({"family": meta["family"], "config": cfg.name, "level": level.value,
                      "episodes": len(rewards), "mean_reward": mean, "stderr": err}))
    return 0


def _collect_runs(root: Path) -> dict:
    groups: dict = defaultdict(list)
    for path in sorted(root.rglob("run.json")):
        meta = json.loads(path.read_text())
        res = SeedResult(meta["family"], meta["config"], meta["seed"], meta["steps"], meta["curves"],
                         meta["train_episodes"], meta["learner_steps"], meta["failed"], meta["error"],
                         meta["wall_clock"], meta["param_ids"], str(path.parent))
        groups[(meta["family"], meta["config"])].append((res, RunSettings(**meta["settings"])))
    return groups


def cmd_report(args) -> int:
    root = Path(args.runs)
    groups = _collect_runs(root)
    if not groups:
        raise ContractError(f"no run.json files under {root}")
    cache_path = root / "baselines.json"
    cache = json.loads(cache_path.read_text()) if cache_path.exists() else {}
    rows, failed, runs, baselines_all = [], [], [], {}
    for (family, config), items in sorted(groups.items()):
        settings = items[0][1]
        key = f"{family}:{json.dumps(settings.task, sort_keys=True)}:{settings.score['baseline_episodes']}"
        if key not in cache:
            cache[key] = {k: list(v) for k, v in compute_baselines(family, settings).items()}
        baselines = {k: tuple(v) for k, v in cache[key].items()}
        baselines_all[family] = baselines
        record = record_from_results([r for r, _ in items])
        row = score_record(record, baselines, settings)
        if row is not None:
            rows.append(row)
        if record.failed_seeds:
            failed.append({"family": family, "config": config, "seeds": record.failed_seeds,
                           "errors": record.meta["errors"]})
        runs.append({"family": family, "config": config, "seeds": record.seeds,
                     "failed_seeds": record.failed_seeds, "run_dirs": record.meta["run_dirs"],
                     "wall_clock": record.meta["wall_clock"]})
    cache_path.write_text(json.dumps(cache, indent=2))
    paths = emit_report(ScoreReport(rows, baselines_all, failed, runs), args.out or root / "report")
    print(Path(paths["heatmap"]).read_text(), end="")
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_gradcheck(args) -> int:
    ok = True
    for name, report in checks.run_all(args.seed).items():
        ok &= report.passed
        print(f"{'PASS' if report.passed else 'FAIL'} {name}: max relative error {report.max_error:.3e} "
              f"(tolerance {report.tol:g})")
    return 0 if ok else 1


def cmd_tasks_list(args) -> int:
    print(f"kernel backend: {kernels.BACKEND}")
    for family in FAMILIES:
        print(family)
        for level in LEVEL_ORDER:
            pool = pool_for(family, level)
            print(f"  {level.value:<20} scale={scale_for(family, level)!s:<22} stimuli={len(pool)}")
    return 0


def cmd_tasks_play(args) -> int:
    family = canonical_family(args.family)
    level = Level.parse(args.level)
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    inst = make_task(family, level, args.seed, stream=args.stream, **overrides)
    policy = OraclePolicy(family) if args.policy == "oracle" else RandomPolicy(family, args.seed)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(out)
    writer.writerow(["episode", "trial", "reward", "steps", "time_to_goal"])
    totals = []
    try:
        for ep in range(args.episodes):
            inst.reset()
            while not inst.done:
                inst.step(policy(inst))
            for row in inst.trial_log:
                ttg = row["steps"] if row["reward"] > 0 else ""
                writer.writerow([ep, row["trial"], row["reward"], row["steps"], ttg])
            totals.append(inst.episode_reward)
    finally:
        if args.out:
            out.close()
    print(f"{family} {level.value} {args.policy}: mean episode reward {np.mean(totals):.3f} "
          f"over {len(totals)} episodes", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memrecall", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one (family, config, seed)",
                       epilog="config-file keys:\n" + schema_text(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--family", required=True)
    p.add_argument("--config", default="mra", help="ablation name, e.g. mra, lstm_mem, ff")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=None, help="environment steps (default from settings)")
    p.add_argument("--config-file", default=None, help="INI file of overrides")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="single override")
    p.add_argument("--out", default="runs")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of a saved checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--level", required=True)
    p.add_argument("--episodes", type=int, default=16)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("report", help="score every run under a directory")
    p.add_argument("--runs", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("gradcheck", help="finite-difference checks at float64")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("tasks", help="inspect the task suite")
    tsub = p.add_subparsers(dest="tasks_command", required=True)
    t = tsub.add_parser("list", help="families, levels and scales")
    t.set_defaults(fn=cmd_tasks_list)
    t = tsub.add_parser("play", help="run a scripted policy and write per-trial CSV")
    t.add_argument("--family", required=True)
    t.add_argument("--level", default="train_small")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--stream", type=int, default=0)
    t.add_argument("--episodes", type=int, default=1)
    t.add_argument("--policy", choices=("oracle", "random"), default="oracle")
    t.add_argument("--trials", type=int, default=None)
    t.add_argument("--out", default=None)
    t.set_defaults(fn=cmd_tasks_play)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
