"""Score tables: long-form CSV, a plain-text heatmap and a run manifest."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import kernels
from ..diffcore import ContractError
from .scoring import LEVEL_KEYS, ScoreRow

REPORT_COLUMNS = ("config", "family", "level", "score", "stderr", "seeds")
SCORE_LABEL = "oracle-normalized"


@dataclass
class ScoreReport:
    rows: list                                       # ScoreRow
    baselines: dict = field(default_factory=dict)    # family -> level -> (random, oracle)
    failed: list = field(default_factory=list)
    runs: list = field(default_factory=list)

    def long_rows(self) -> list[dict]:
        out = []
        for row in self.rows:
            for level in LEVEL_KEYS:
                mean, err = row.scores[level]
                out.append({"config": row.config, "family": row.family, "level": level,
                            "score": mean, "stderr": err, "seeds": len(row.per_seed[level])})
        return out


def _mean_train(rows: list[dict], key: str) -> dict:
    acc: dict = {}
    for r in rows:
        if r["level"] == "train":
            acc.setdefault(r[key], []).append(r["score"])
    return {k: float(np.mean(v)) for k, v in acc.items()}


def sort_order(rows: list[dict]) -> tuple[list, list]:
    """Configs and families ordered by mean train score, best first; ties by name."""
    by_cfg, by_fam = _mean_train(rows, "config"), _mean_train(rows, "family")
    configs = sorted(by_cfg, key=lambda c: (-by_cfg[c], c))
    families = sorted(by_fam, key=lambda f: (-by_fam[f], f))
    return configs, families


def heatmap_text(rows: list[dict]) -> str:
    configs, families = sort_order(rows)
    cell = {(r["config"], r["family"], r["level"]): r["score"] for r in rows}
    width = max([len(c) for c in configs] + [6])
    blocks = []
    for level in LEVEL_KEYS:
        lines = [f"{level} ({SCORE_LABEL} score, 0 = random, 100 = oracle)"]
        lines.append(" " * width + " | " + " ".join(f"{f[:10]:>10}" for f in families))
        for c in configs:
            vals = []
            for f in families:
                v = cell.get((c, f, level))
                vals.append(f"{v:10.1f}" if v is not None and np.isfinite(v) else f"{'-':>10}")
            lines.append(f"{c:<{width}} | " + " ".join(vals))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def emit_report(report: ScoreReport, out_dir) -> dict:
    """Write scores.csv, heatmap.txt and manifest.json; returns their paths."""
    rows = report.long_rows()
    if not rows:
        raise ContractError("nothing to report: every run failed or no runs were given")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "scores.csv", "heatmap": out / "heatmap.txt", "manifest": out / "manifest.json"}
    with open(paths["csv"], "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({**r, "score": repr(float(r["score"])), "stderr": repr(float(r["stderr"]))})
    paths["heatmap"].write_text(heatmap_text(rows))
    manifest = {
        "score_label": SCORE_LABEL,
        "note": "scores are normalized to a random agent (0) and a hidden-state oracle (100) "
                "in this implementation's tasks; they are not comparable to numbers from other environments",
        "kernel_backend": kernels.BACKEND,
        "baselines": {f: {k: list(v) for k, v in b.items()} for f, b in report.baselines.items()},
        "failed": report.failed,
        "runs": report.runs,
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, default=str))
    return paths


def parse_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"config": r["config"], "family": r["family"], "level": r["level"],
                 "score": float(r["score"]), "stderr": float(r["stderr"]), "seeds": int(r["seeds"])}
                for r in csv.DictReader(fh)]


def rows_from_scores(rows: list[ScoreRow]) -> list[dict]:
    return ScoreReport(rows).long_rows()
