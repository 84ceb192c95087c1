"""Run settings: per-family defaults plus an INI override file.

The file is plain ``key = value`` text with one section per module.  Every
key is listed in :data:`SCHEMA` with its type and meaning; unknown sections
or keys are rejected.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from ..diffcore import ContractError
from ..taskforge import tables

# Published full-scale hyper-parameters (hidden size, baseline cost,
# entropy cost, batch, unroll, discount, optimizer, learning rate, CPC steps,
# CPC weight).  Desk-scale runs shrink the network and unroll; see ``defaults_for``.
PUBLISHED_HYPERS = {
    "avm": (512, 0.5, 0.0052, 16, 50, 0.98, "adam", 1e-5, 10, 10),
    "continuous_recognition": (1024, 0.5, 0.01, 16, 50, 0.98, "adam", 1e-5, 10, 10),
    "change_detection": (512, 0.5, 0.01, 16, 50, 0.98, "adam", 1e-5, 10, 10),
    "what_then_where": (1024, 2.0, 0.01, 32, 100, 0.98, "adam", 1e-5, 10, 30),
    "spot_diff_basic": (1024, 0.5, 0.003, 16, 200, 0.99, "rmsprop", 1e-4, 50, 20),
    "spot_diff_passive": (1024, 0.5, 0.003, 16, 200, 0.999, "rmsprop", 1e-4, 50, 20),
    "spot_diff_multi_object": (1024, 0.5, 0.003, 16, 200, 0.99, "rmsprop", 1e-4, 50, 20),
    "spot_diff_motion": (1024, 0.5, 0.003, 16, 200, 0.99, "rmsprop", 1e-4, 50, 20),
    "visible_goal_maze": (512, 0.5, 0.0052, 16, 50, 0.98, "adam", 1e-5, 10, 5),
    "visible_goal_buildings": (1024, 0.5, 0.003, 16, 200, 0.99, "rmsprop", 1e-4, 50, 20),
    "invisible_goal_buildings": (1024, 0.5, 0.003, 16, 200, 0.99, "rmsprop", 1e-4, 50, 20),
    "invisible_goal_empty": (1024, 0.5, 0.003, 16, 200, 0.99, "rmsprop", 1e-4, 50, 20),
    "transitive_inference": (1024, 0.5, 0.003, 16, 200, 0.98, "adam", 1e-4, 50, 20),
}

# section -> key -> (type, help)
SCHEMA = {
    "model": {
        "embed": (int, "width of the observation embedding x_t"),
        "hidden": (int, "width of the core output h_t"),
        "key": (int, "width of memory keys and queries"),
        "neighbors": (int, "neighbours per memory read"),
        "capacity": (int, "slots per episodic buffer"),
        "epsilon": (float, "kernel constant in the read weights"),
        "conv_channels": (int, "filters per conv layer for grid observations"),
        "dtype": (str, "float32 or float64"),
    },
    "learner": {
        "optimizer": (str, "adam or rmsprop"),
        "learning_rate": (float, "optimizer step size"),
        "clip_norm": (float, "global gradient-norm clip; 0 disables"),
        "entropy_cost": (float, "weight of the entropy bonus"),
        "baseline_cost": (float, "weight of the value loss"),
        "discount": (float, "gamma"),
        "rho_bar": (float, "V-trace importance clip for the targets"),
        "c_bar": (float, "V-trace trace-cutting clip"),
        "batch_size": (int, "trajectories per update (also the number of actor environments)"),
        "unroll": (int, "steps per trajectory"),
        "cpc_steps": (int, "prediction horizon of the CPC loss"),
        "cpc_weight": (float, "weight of the CPC loss"),
        "rec_image": (float, "weight of the observation reconstruction term"),
        "rec_action": (float, "weight of the previous-action term"),
        "rec_reward": (float, "weight of the previous-reward term"),
    },
    "train": {
        "budget": (int, "environment steps per run"),
        "eval_points": (int, "number of evaluation points along training"),
        "eval_episodes": (int, "greedy episodes per level per evaluation point"),
        "checkpoint_every": (int, "learner updates between checkpoints; 0 keeps only the final one"),
        "threaded": (bool, "run the actor in a background thread (non-deterministic)"),
    },
    "task": {
        "trials": (int, "trial count replacing the training-level table (AVM / recognition) or per episode"),
        "duration": (int, "navigation episode length in steps"),
    },
    "score": {
        "alpha": (float, "per-episode EWMA constant; default from the family"),
        "window": (int, "rolling-mean window"),
        "baseline_episodes": (int, "episodes per level for the random/oracle baselines"),
    },
}


@dataclass
class RunSettings:
    family: str
    model: dict = field(default_factory=dict)
    learner: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    task: dict = field(default_factory=dict)
    score: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def defaults_for(family: str) -> RunSettings:
    """Desk-scale defaults: the published costs, discount and optimizer kind with
    a smaller network, a shorter unroll and a larger step size."""
    family = tables.canonical_family(family)
    _, baseline, entropy, batch, unroll, gamma, opt, _, cpc_steps, cpc_weight = PUBLISHED_HYPERS[family]
    desk_unroll = 20
    capacity = 1024 if family in tables.PSYCHLAB else 2048
    return RunSettings(
        family=family,
        model={"embed": 64, "hidden": 128, "key": 128, "neighbors": 10, "capacity": capacity,
               "epsilon": 1e-3, "conv_channels": 8, "dtype": "float32"},
        learner={"optimizer": opt, "learning_rate": 1e-3 if opt == "adam" else 5e-4, "clip_norm": 40.0,
                 "entropy_cost": entropy, "baseline_cost": baseline, "discount": gamma,
                 "rho_bar": 1.0, "c_bar": 1.0, "batch_size": batch, "unroll": desk_unroll,
                 "cpc_steps": min(cpc_steps, desk_unroll - 1), "cpc_weight": float(cpc_weight) / 10.0,
                 "rec_image": 1.0, "rec_action": 1.0, "rec_reward": 1.0},
        train={"budget": 200_000, "eval_points": 40, "eval_episodes": 16, "checkpoint_every": 0,
               "threaded": False},
        task={},
        score={"alpha": tables.EWMA_ALPHA[family], "window": 10, "baseline_episodes": 50},
    )


def _convert(section: str, key: str, raw: str):
    kind = SCHEMA[section][key][0]
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("1", "true", "yes", "on")
        return kind(raw.strip())
    except ValueError:
        raise ContractError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_overrides(text: str) -> dict:
    """Parse INI text into ``{section: {key: value}}``; unknown names are errors."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ContractError(f"malformed config: {exc}") from None
    out = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ContractError(f"unknown config section [{section}]; known: {', '.join(SCHEMA)}")
        out[section] = {}
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ContractError(f"unknown key {key!r} in [{section}]; known: {', '.join(SCHEMA[section])}")
            out[section][key] = _convert(section, key, raw)
    return out


def apply_overrides(settings: RunSettings, overrides: dict) -> RunSettings:
    for section, values in overrides.items():
        if section not in SCHEMA:
            raise ContractError(f"unknown config section [{section}]")
        for key in values:
            if key not in SCHEMA[section]:
                raise ContractError(f"unknown key {key!r} in [{section}]")
        getattr(settings, section).update(values)
    return settings


def load_settings(family: str, path=None, overrides: dict | None = None) -> RunSettings:
    settings = defaults_for(family)
    if path is not None:
        with open(path) as fh:
            apply_overrides(settings, parse_overrides(fh.read()))
    if overrides:
        apply_overrides(settings, overrides)
    return settings


def schema_text() -> str:
    """Human-readable listing of every accepted key."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (kind, text) in keys.items():
            lines.append(f"  {key} ({kind.__name__}): {text}")
    return "\n".join(lines)
