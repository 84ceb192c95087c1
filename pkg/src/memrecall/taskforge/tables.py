"""Per-family scale and stimulus tables for the four levels."""
from __future__ import annotations

from .base import Level

S, I, L, X = Level.TRAIN_SMALL, Level.HOLDOUT_INTERPOLATE, Level.TRAIN_LARGE, Level.HOLDOUT_EXTRAPOLATE

PSYCHLAB = ("avm", "continuous_recognition", "change_detection", "what_then_where")
SPOT_DIFF = ("spot_diff_basic", "spot_diff_passive", "spot_diff_multi_object", "spot_diff_motion")
NAVIGATION = ("visible_goal_maze", "visible_goal_buildings", "invisible_goal_buildings", "invisible_goal_empty")
FAMILIES = PSYCHLAB + SPOT_DIFF + NAVIGATION + ("transitive_inference",)

# Scale parameter per level.  Tuples are sets sampled from uniformly per
# trial (delays) or per episode (object counts).
TRIALS = {S: 50, I: 40, L: 50, X: 75}
CHANGE_DELAYS = {S: (2, 4, 8), I: (16, 32), L: (64, 128), X: (130, 150, 200, 250)}
WTW_DELAYS = {S: (4, 8), I: (16, 64), L: (32, 128), X: (132, 156, 200, 256)}
CORRIDOR_DELAY = {S: 0, I: 5, L: 10, X: 15}
OBJECT_COUNT = {S: (2, 3), I: (4,), L: (5, 6), X: (7,)}
ARENA = {S: 10, I: 15, L: 20, X: 25}
MAZE = {S: 11, I: 15, L: 21, X: 27}
CHAIN = {S: 5, I: 6, L: 7, X: 8}

SCALES = {
    "avm": TRIALS,
    "continuous_recognition": TRIALS,
    "change_detection": CHANGE_DELAYS,
    "what_then_where": WTW_DELAYS,
    "spot_diff_basic": CORRIDOR_DELAY,
    "spot_diff_passive": CORRIDOR_DELAY,
    "spot_diff_motion": CORRIDOR_DELAY,
    "spot_diff_multi_object": OBJECT_COUNT,
    "visible_goal_maze": MAZE,
    "visible_goal_buildings": ARENA,
    "invisible_goal_buildings": ARENA,
    "invisible_goal_empty": ARENA,
    "transitive_inference": CHAIN,
}

SCALE_NAMES = {
    "avm": "trials", "continuous_recognition": "trials",
    "change_detection": "delay", "what_then_where": "delay",
    "spot_diff_basic": "corridor_delay", "spot_diff_passive": "corridor_delay",
    "spot_diff_motion": "corridor_delay", "spot_diff_multi_object": "objects",
    "visible_goal_maze": "maze_size", "visible_goal_buildings": "arena_size",
    "invisible_goal_buildings": "arena_size", "invisible_goal_empty": "arena_size",
    "transitive_inference": "chain_length",
}

# Stimulus pools (train, holdout).  Image ids: even for training, odd for holdout.
IMAGE_POOL = (tuple(f"image_{i}" for i in range(0, 200, 2)), tuple(f"image_{i}" for i in range(1, 200, 2)))
CD_COLORS = (("amethyst", "caramel", "honeydew", "jade", "mallow"), ("yellow", "lime", "pink", "sky", "violet"))
DIGITS = (tuple(f"digit_{i}" for i in range(5)), tuple(f"digit_{i}" for i in range(5, 10)))
SD_COLORS = (("red", "green", "blue", "white", "slate"), ("yellow", "brown", "pink", "orange", "purple"))
MOTIONS = (("circle", "square", "five_point_star", "hexagon", "linear_x", "linear_diag_pos"),
           ("no_motion", "triangle", "pentagon", "figure_eight", "linear_y", "linear_diag_neg"))
QUADRANTS = (("northwest", "southeast"), ("northeast", "southwest"))
HALVES = (("north",), ("south",))
TI_COLORS = (("red", "green", "blue", "white", "black", "pink", "orange", "purple", "grey", "tan"),
             ("slate", "yellow", "brown", "lime", "magenta", "mint", "navy", "olive", "teal", "turquoise"))

STIMULI = {
    "avm": IMAGE_POOL,
    "continuous_recognition": IMAGE_POOL,
    "change_detection": CD_COLORS,
    "what_then_where": DIGITS,
    "spot_diff_basic": SD_COLORS,
    "spot_diff_passive": SD_COLORS,
    "spot_diff_multi_object": SD_COLORS,
    "spot_diff_motion": MOTIONS,
    "visible_goal_maze": HALVES,
    "visible_goal_buildings": QUADRANTS,
    "invisible_goal_buildings": QUADRANTS,
    "invisible_goal_empty": QUADRANTS,
    "transitive_inference": TI_COLORS,
}

# Per-episode smoothing constant for the score pipeline: the fast EWMA for the
# symbolic families and the procedural maze, the slow one for the rest.
EWMA_ALPHA = {f: 0.001 for f in FAMILIES}
EWMA_ALPHA.update({f: 0.05 for f in PSYCHLAB + ("visible_goal_maze",)})

_ALIASES = {
    "avm": "avm", "arbitraryvisuomotormapping": "avm",
    "continuousrecognition": "continuous_recognition", "cr": "continuous_recognition",
    "changedetection": "change_detection", "cd": "change_detection",
    "whatthenwhere": "what_then_where", "wtw": "what_then_where",
    "spotdiffbasic": "spot_diff_basic", "spotthedifferencebasic": "spot_diff_basic",
    "spotdiffpassive": "spot_diff_passive", "spotthedifferencepassive": "spot_diff_passive",
    "spotdiffmultiobject": "spot_diff_multi_object", "spotthedifferencemultiobject": "spot_diff_multi_object",
    "spotdiffmotion": "spot_diff_motion", "spotthedifferencemotion": "spot_diff_motion",
    "visiblegoalmaze": "visible_goal_maze", "visiblegoalproceduralmaze": "visible_goal_maze",
    "visiblegoalbuildings": "visible_goal_buildings", "visiblegoalwithbuildings": "visible_goal_buildings",
    "invisiblegoalbuildings": "invisible_goal_buildings", "invisiblegoalwithbuildings": "invisible_goal_buildings",
    "invisiblegoalempty": "invisible_goal_empty", "invisiblegoalemptyarena": "invisible_goal_empty",
    "transitiveinference": "transitive_inference", "ti": "transitive_inference",
}


def canonical_family(name: str) -> str:
    key = str(name).lower().replace("_", "").replace("-", "").replace(" ", "")
    try:
        return _ALIASES[key]
    except KeyError:
        raise KeyError(f"unknown task family {name!r}; known: {', '.join(FAMILIES)}") from None


def scale_for(family: str, level) -> object:
    return SCALES[canonical_family(family)][Level.parse(level)]


def pool_for(family: str, level) -> tuple:
    train, holdout = STIMULI[canonical_family(family)]
    return train if Level.parse(level).is_train else holdout
