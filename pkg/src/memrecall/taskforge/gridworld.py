"""Top-down grid analogs of the first-person tasks.

The agent has a cell and one of four headings and uses the eight-action set:
forward, backward, strafe left, strafe right, turn left, turn right, turn
left while moving forward, turn right while moving forward.  It observes a
7×7 window centred on itself and rotated so its heading points up, plus its
heading and normalised position (standing in for the skybox cues).  Cells
outside the agent's current region render as empty.
"""
from __future__ import annotations

import numpy as np

from ..kernels import distance_field
from . import tables
from .base import ObsSpec, TaskInstance

(FORWARD, BACKWARD, STRAFE_LEFT, STRAFE_RIGHT,
 TURN_LEFT, TURN_RIGHT, TURN_LEFT_FORWARD, TURN_RIGHT_FORWARD) = range(8)
HEADINGS = np.array([(-1, 0), (0, 1), (1, 0), (0, -1)])  # N, E, S, W
VIEW = 7
CODE_DIM = 8
WALL, GOAL, GATE = 0, 1, 2
CODE0 = 3
MOTION0 = CODE0 + CODE_DIM
CHANNELS = MOTION0 + 4
EXTRA = 6


def action_effect(heading: int, action: int) -> tuple[int, int | None]:
    """(new heading, direction of travel or None) for an action."""
    if action == FORWARD:
        return heading, heading
    if action == BACKWARD:
        return heading, (heading + 2) % 4
    if action == STRAFE_LEFT:
        return heading, (heading + 3) % 4
    if action == STRAFE_RIGHT:
        return heading, (heading + 1) % 4
    if action == TURN_LEFT:
        return (heading + 3) % 4, None
    if action == TURN_RIGHT:
        return (heading + 1) % 4, None
    if action == TURN_LEFT_FORWARD:
        return (heading + 3) % 4, (heading + 3) % 4
    if action == TURN_RIGHT_FORWARD:
        return (heading + 1) % 4, (heading + 1) % 4
    raise ValueError(f"unknown action {action}")


def _view_offsets() -> np.ndarray:
    """[4, V, V, 2] world offsets of every view cell for each heading."""
    half = VIEW // 2
    out = np.zeros((4, VIEW, VIEW, 2), dtype=np.int64)
    for h in range(4):
        fwd, right = HEADINGS[h], HEADINGS[(h + 1) % 4]
        for i in range(VIEW):
            for j in range(VIEW):
                out[h, i, j] = (half - i) * fwd + (j - half) * right
    return out


_OFFSETS = _view_offsets()


def transition_table(blocked: np.ndarray) -> np.ndarray:
    """next_state[s, a] over states s = (row * W + col) * 4 + heading."""
    hgt, wid = blocked.shape
    rows, cols = np.meshgrid(np.arange(hgt), np.arange(wid), indexing="ij")
    rows, cols = rows.ravel(), cols.ravel()
    nxt = np.zeros((hgt * wid * 4, 8), dtype=np.int64)
    for h in range(4):
        s = (rows * wid + cols) * 4 + h
        for a in range(8):
            nh, d = action_effect(h, a)
            r2, c2 = rows, cols
            if d is not None:
                tr, tc = rows + HEADINGS[d][0], cols + HEADINGS[d][1]
                ok = (tr >= 0) & (tr < hgt) & (tc >= 0) & (tc < wid)
                ok[ok] &= ~blocked[tr[ok], tc[ok]]
                r2, c2 = np.where(ok, tr, rows), np.where(ok, tc, cols)
            nxt[s, a] = (r2 * wid + c2) * 4 + nh
    return nxt


def cell_distances(blocked: np.ndarray, start) -> np.ndarray:
    """Breadth-first step counts between cells (4-connected), -1 if unreachable."""
    hgt, wid = blocked.shape
    dist = np.full((hgt, wid), -1, dtype=np.int64)
    dist[start] = 0
    frontier = [tuple(start)]
    while frontier:
        nxt = []
        for r, c in frontier:
            for dr, dc in HEADINGS:
                rr, cc = r + dr, c + dc
                if 0 <= rr < hgt and 0 <= cc < wid and not blocked[rr, cc] and dist[rr, cc] < 0:
                    dist[rr, cc] = dist[r, c] + 1
                    nxt.append((rr, cc))
        frontier = nxt
    return dist


class Planner:
    """Shortest-path oracle to a set of goal cells over (cell, heading) states."""

    def __init__(self, blocked: np.ndarray, goal_cells):
        self.shape = blocked.shape
        self.next_state = transition_table(blocked)
        mask = np.zeros(blocked.size * 4, dtype=bool)
        for r, c in goal_cells:
            base = (r * self.shape[1] + c) * 4
            mask[base:base + 4] = True
        self.dist = np.asarray(distance_field(self.next_state, mask))

    def state(self, pos, heading) -> int:
        return (pos[0] * self.shape[1] + pos[1]) * 4 + heading

    def steps(self, pos, heading) -> int:
        return int(self.dist[self.state(pos, heading)])

    def action(self, pos, heading) -> int:
        d = self.dist[self.next_state[self.state(pos, heading)]].astype(np.float64)
        d[d < 0] = np.inf
        return int(np.argmin(d))


class GridTask(TaskInstance):
    num_actions = 8
    code_dim = CODE_DIM

    def __init__(self, spec, stream=0, overrides=None):
        super().__init__(spec, stream, overrides)
        self.obs_spec = ObsSpec("grid", VIEW * VIEW * CHANNELS + EXTRA, (VIEW, VIEW, CHANNELS), EXTRA)

    # world state set by subclasses in _begin: walls, region, pos, heading
    def blocked_cells(self) -> np.ndarray:
        return self.walls

    def can_enter(self, cell) -> bool:
        return not self.blocked_cells()[cell]

    def move(self, action: int) -> None:
        nh, d = action_effect(self.heading, action)
        self.heading = nh
        if d is None:
            return
        target = (self.pos[0] + HEADINGS[d][0], self.pos[1] + HEADINGS[d][1])
        hgt, wid = self.walls.shape
        if 0 <= target[0] < hgt and 0 <= target[1] < wid and self.can_enter(target):
            self.pos = target

    def layers(self) -> np.ndarray:
        lay = np.zeros(self.walls.shape + (CHANNELS,))
        lay[..., WALL] = self.walls
        return lay

    def _observe(self) -> np.ndarray:
        lay = self.layers()
        if getattr(self, "region", None) is not None:
            mine = self.region[self.pos]
            hidden = (self.region != mine) & (self.region >= 0)
            lay[hidden] = 0.0
        pad = VIEW // 2
        padded = np.zeros((lay.shape[0] + 2 * pad, lay.shape[1] + 2 * pad, CHANNELS))
        padded[..., WALL] = 1.0
        padded[pad:-pad, pad:-pad] = lay
        off = _OFFSETS[self.heading]
        view = padded[self.pos[0] + pad + off[..., 0], self.pos[1] + pad + off[..., 1]]
        extra = np.zeros(EXTRA)
        extra[self.heading] = 1.0
        hgt, wid = self.walls.shape
        extra[4] = self.pos[0] / (hgt - 1)
        extra[5] = self.pos[1] / (wid - 1)
        return np.concatenate([view.ravel(), extra])


# --------------------------------------------------------------------------
# spot the difference

MOTION_PATTERNS = {
    "circle": [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)],
    "square": [(-1, -1), (-1, -1), (-1, 1), (-1, 1), (1, 1), (1, 1), (1, -1), (1, -1)],
    "five_point_star": [(-1, 0), (1, 1), (0, -1), (0, 1), (1, -1), (-1, 0), (0, 0), (0, 0)],
    "hexagon": [(-1, 0), (-1, 1), (1, 1), (1, 0), (1, -1), (-1, -1), (-1, 0), (-1, 1)],
    "linear_x": [(0, -1), (0, 0), (0, 1), (0, 0)] * 2,
    "linear_diag_pos": [(1, -1), (0, 0), (-1, 1), (0, 0)] * 2,
    "no_motion": [(0, 0)] * 8,
    "triangle": [(-1, 0), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, 0), (-1, 0)],
    "pentagon": [(-1, 0), (0, 1), (1, 1), (1, -1), (0, -1), (-1, 0), (0, 1), (1, 1)],
    "figure_eight": [(0, 0), (-1, 1), (1, 1), (0, 0), (-1, -1), (1, -1), (0, 0), (0, 0)],
    "linear_y": [(-1, 0), (0, 0), (1, 0), (0, 0)] * 2,
    "linear_diag_neg": [(-1, -1), (0, 0), (1, 1), (0, 0)] * 2,
}


class SpotTheDifference(GridTask):
    """Room 1 with blocks, a gated corridor, room 2 with one block altered.

    Room 1 blocks are obstacles.  The corridor seals behind the agent and its
    middle cell holds the agent for ``delay`` steps.  Stepping onto a room 2
    block ends the episode with reward 1 if it is the altered one.
    """

    room = 5
    corridor = 5
    motion = False
    passive = False

    def code_vocabulary(self):
        train, holdout = tables.STIMULI[self.family]
        return train + holdout + (("block",) if self.motion else ())

    def __init__(self, spec, stream=0, overrides=None):
        super().__init__(spec, stream, overrides)
        if self.family == "spot_diff_multi_object":
            self.counts = tuple(int(c) for c in np.atleast_1d(spec.scale))
            self.delay = int(self.overrides.get("delay", 0))
        else:
            self.counts = (int(self.overrides.get("objects", 2)),)
            self.delay = int(spec.scale)
        r, lc = self.room, self.corridor
        self.mid = r // 2 + 1
        hgt, wid = r + 2, 2 * r + lc + 2
        self.walls = np.ones((hgt, wid), dtype=bool)
        self.region = np.full((hgt, wid), -1, dtype=np.int64)
        self.walls[1:r + 1, 1:r + 1] = False
        self.region[1:r + 1, 1:r + 1] = 1
        self.walls[self.mid, r + 1:r + 1 + lc] = False
        self.region[self.mid, r + 1:r + 1 + lc] = 2
        self.walls[1:r + 1, r + lc + 1:2 * r + lc + 1] = False
        self.region[1:r + 1, r + lc + 1:2 * r + lc + 1] = 3
        self.gate = (self.mid, r + 1 + lc // 2)
        self.shift = r + lc
        self.entrance = (self.mid, r)

    def _room1_cells(self):
        return [(i, j) for i in range(1, self.room + 1) for j in range(1, self.room + 1)]

    def make_layout(self, spawn, heading, positions, stimuli, changed, new_stimulus, phases=None):
        return {"spawn": tuple(spawn), "heading": int(heading), "positions": [tuple(p) for p in positions],
                "stimuli": list(stimuli), "changed": int(changed), "new": new_stimulus,
                "phases": list(phases) if phases is not None else [0] * len(positions)}

    def _sample_layout(self, rng):
        pool = self.spec.stimulus_pool
        n = self.counts[rng.integers(len(self.counts))]
        cells = [c for c in self._room1_cells() if c != self.entrance]
        while True:
            if self.passive:
                positions = [(self.mid - 1, self.room), (self.mid + 1, self.room)]
            else:
                positions = [cells[i] for i in rng.choice(len(cells), n, replace=False)]
            free = [c for c in cells if c not in positions]
            spawn = free[rng.integers(len(free))]
            changed = int(rng.integers(len(positions)))
            if self._solvable(spawn, positions, changed):
                break
        stimuli = [pool[i] for i in rng.integers(0, len(pool), len(positions))]
        others = [s for s in pool if s != stimuli[changed]]
        new = others[rng.integers(len(others))]
        phases = [int(p) for p in rng.integers(0, 8, len(positions))] if self.motion else None
        return self.make_layout(spawn, int(rng.integers(4)), positions, stimuli, changed, new, phases)

    def _solvable(self, spawn, positions, changed) -> bool:
        """Room 1 exit reachable and the altered room 2 block reachable around the others."""
        blocked = self.walls.copy()
        for p in positions:
            blocked[p] = True
        if cell_distances(blocked, spawn)[self.entrance] < 0:
            return False
        blocked = self.walls.copy()
        for i, p in enumerate(positions):
            if i != changed:
                blocked[p[0], p[1] + self.shift] = True
        return cell_distances(blocked, (self.mid, self.room + self.corridor))[
            positions[changed][0], positions[changed][1] + self.shift] >= 0

    def _begin(self, layout):
        self.pos = layout["spawn"]
        self.heading = layout["heading"]
        self.stage = 1
        self.hold = 0
        self.gate_used = False
        self.room1 = {p: i for i, p in enumerate(layout["positions"])}
        self.room2 = {(p[0], p[1] + self.shift): i for i, p in enumerate(layout["positions"])}
        self.room2_stim = list(layout["stimuli"])
        self.room2_stim[layout["changed"]] = layout["new"]
        blocked = self.walls.copy()
        for p in self.room1:
            blocked[p] = True
        target = [p for p, i in self.room2.items() if i == layout["changed"]]
        for p in self.room2:
            if p != target[0]:
                blocked[p] = True
        self.planner = Planner(blocked, target)
        self._oracle_steps = self.planner.steps(self.pos, self.heading) + self.delay

    def can_enter(self, cell):
        if self.walls[cell] or cell in self.room1:
            return False
        return self.region[cell] >= self.stage

    def _render_block(self, lay, cell, stim, phase):
        if self.motion:
            lay[cell + (slice(CODE0, CODE0 + CODE_DIM),)] = self.codes["block"]
            dr, dc = MOTION_PATTERNS[stim][(self.t + phase) % 8]
            lay[cell + (MOTION0 + 0,)] = dr < 0
            lay[cell + (MOTION0 + 1,)] = dr > 0
            lay[cell + (MOTION0 + 2,)] = dc < 0
            lay[cell + (MOTION0 + 3,)] = dc > 0
        else:
            lay[cell + (slice(CODE0, CODE0 + CODE_DIM),)] = self.codes[stim]

    def layers(self):
        lay = super().layers()
        ph = self.layout["phases"]
        for p, i in self.room1.items():
            self._render_block(lay, p, self.layout["stimuli"][i], ph[i])
        for p, i in self.room2.items():
            self._render_block(lay, p, self.room2_stim[i], ph[i])
        if self.hold > 0 or not self.gate_used:
            lay[self.gate + (GATE,)] = 1.0
        return lay

    def _advance(self, action):
        if self.hold > 0:
            self.hold -= 1
            return 0.0, False, {"held": True}
        self.move(action)
        self.stage = max(self.stage, int(self.region[self.pos]))
        if self.pos == self.gate and not self.gate_used:
            self.gate_used = True
            self.hold = self.delay
        if self.pos in self.room2:
            hit = self.room2[self.pos]
            reward = float(hit == self.layout["changed"])
            self.trial_log.append({"trial": 0, "reward": reward, "steps": self.t + 1})
            return reward, True, {"choice": hit}
        return 0.0, False, {}

    def oracle_action(self):
        if self.hold > 0:
            return TURN_LEFT
        return self.planner.action(self.pos, self.heading)

    def oracle_steps(self):
        return self._oracle_steps

    def analytic_max(self):
        return 1.0

    # memoryless analysis: what the agent sees once inside room 2
    def decision_key(self, layout) -> tuple:
        stims = list(layout["stimuli"])
        stims[layout["changed"]] = layout["new"]
        return tuple(zip(layout["positions"], stims, layout["phases"]))

    def decision_rewards(self, layout) -> np.ndarray:
        r = np.zeros(len(layout["positions"]))
        r[layout["changed"]] = 1.0
        return r


class SpotDiffBasic(SpotTheDifference):
    family = "spot_diff_basic"


class SpotDiffPassive(SpotTheDifference):
    family = "spot_diff_passive"
    passive = True


class SpotDiffMultiObject(SpotTheDifference):
    family = "spot_diff_multi_object"


class SpotDiffMotion(SpotTheDifference):
    family = "spot_diff_motion"
    motion = True


# --------------------------------------------------------------------------
# goal navigation

_BUILDING_CODES = ("building_a", "building_b", "building_c", "building_d")


def perfect_maze(size: int, rng: np.random.Generator) -> np.ndarray:
    """Wall mask of a depth-first-search maze on a size×size grid (size odd)."""
    walls = np.ones((size, size), dtype=bool)
    start = (1, 1)
    walls[start] = False
    stack = [start]
    while stack:
        r, c = stack[-1]
        options = [(r + 2 * dr, c + 2 * dc, dr, dc) for dr, dc in HEADINGS
                   if 0 < r + 2 * dr < size - 1 and 0 < c + 2 * dc < size - 1 and walls[r + 2 * dr, c + 2 * dc]]
        if not options:
            stack.pop()
            continue
        rr, cc, dr, dc = options[rng.integers(len(options))]
        walls[r + dr, c + dc] = False
        walls[rr, cc] = False
        stack.append((rr, cc))
    return walls


class GoalNavigation(GridTask):
    """Fixed goal per episode; +1 and a respawn every time the agent reaches it."""

    visible = True
    buildings = False
    maze = False

    def code_vocabulary(self):
        return _BUILDING_CODES

    def __init__(self, spec, stream=0, overrides=None):
        super().__init__(spec, stream, overrides)
        self.size = int(spec.scale)
        self.duration = int(self.overrides.get("duration", 20 * self.size))
        self.region = None
        if not self.maze:
            n = self.size
            self.walls = np.ones((n + 2, n + 2), dtype=bool)
            self.walls[1:n + 1, 1:n + 1] = False
            self.building_cells = {}
            if self.buildings:
                b = max(1, n // 5)
                for k, (fr, fc) in enumerate([(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)]):
                    r0 = 1 + int(round(fr * n)) - b // 2 - (1 if fr > 0.5 else 0)
                    c0 = 1 + int(round(fc * n)) - b // 2 - (1 if fc > 0.5 else 0)
                    for i in range(r0, r0 + b):
                        for j in range(c0, c0 + b):
                            self.walls[i, j] = True
                            self.building_cells[(i, j)] = _BUILDING_CODES[k]

    def _in_region(self, cell) -> bool:
        hgt, wid = self.walls.shape
        north, west = cell[0] < hgt / 2, cell[1] < wid / 2
        regions = self.spec.stimulus_pool
        tests = {"north": north, "south": not north,
                 "northwest": north and west, "southeast": not north and not west,
                 "northeast": north and not west, "southwest": not north and west}
        return any(tests[r] for r in regions)

    def _sample_layout(self, rng):
        walls = perfect_maze(self.size, rng) if self.maze else self.walls
        free = [tuple(c) for c in np.argwhere(~walls)]
        goals = [c for c in free if self._in_region(c)]
        goal = goals[rng.integers(len(goals))]
        return {"walls": walls, "goal": goal, "respawn_seed": int(rng.integers(2 ** 31))}

    def _begin(self, layout):
        self.walls = layout["walls"]
        self.goal = tuple(layout["goal"])
        self.free = [tuple(c) for c in np.argwhere(~self.walls) if tuple(c) != self.goal]
        self.spawn_rng = np.random.default_rng(layout["respawn_seed"])
        self.planner = Planner(self.walls, [self.goal])
        self.spawns = []
        self.spawn_index = 0
        self._respawn()
        self.trial = 0
        self.trial_start = 0

    def _draw_spawn(self, k):
        while len(self.spawns) <= k:
            c = self.free[self.spawn_rng.integers(len(self.free))]
            self.spawns.append((c, int(self.spawn_rng.integers(4))))
        return self.spawns[k]

    def _respawn(self):
        self.pos, self.heading = self._draw_spawn(self.spawn_index)
        self.spawn_index += 1

    def layers(self):
        lay = super().layers()
        if self.visible:
            lay[self.goal + (GOAL,)] = 1.0
        for cell, name in getattr(self, "building_cells", {}).items():
            lay[cell + (slice(CODE0, CODE0 + CODE_DIM),)] = self.codes[name]
        return lay

    def _advance(self, action):
        self.move(action)
        info = {}
        reward = 0.0
        if self.pos == self.goal:
            reward = 1.0
            info = {"trial": self.trial, "time_to_goal": self.t + 1 - self.trial_start}
            self.trial_log.append({"trial": self.trial, "reward": 1.0, "steps": info["time_to_goal"]})
            self.trial += 1
            self.trial_start = self.t + 1
            self._respawn()
        return reward, self.t + 1 >= self.duration, info

    def step_cap(self):
        return self.duration

    def oracle_action(self):
        return self.planner.action(self.pos, self.heading)

    def oracle_steps(self):
        return self.duration

    def analytic_max(self):
        """Goals reachable within the episode when every trial takes its shortest path."""
        total, k = 0, 0
        while True:
            pos, heading = self._draw_spawn(k)
            total += self.planner.steps(pos, heading)
            if total > self.duration:
                return float(k)
            k += 1


class VisibleGoalMaze(GoalNavigation):
    family = "visible_goal_maze"
    maze = True

    def __init__(self, spec, stream=0, overrides=None):
        super().__init__(spec, stream, overrides)
        self.walls = np.ones((self.size, self.size), dtype=bool)


class VisibleGoalBuildings(GoalNavigation):
    family = "visible_goal_buildings"
    buildings = True


class InvisibleGoalBuildings(GoalNavigation):
    family = "invisible_goal_buildings"
    visible = False
    buildings = True


class InvisibleGoalEmpty(GoalNavigation):
    family = "invisible_goal_empty"
    visible = False


# --------------------------------------------------------------------------
# transitive inference


class TransitiveInference(GridTask):
    """Demo pairs of adjacent chain items, then one held-out challenge pair.

    Walking onto an object picks it.  In the demo phase the agent must pick
    the higher-valued item to advance; a wrong pick re-presents the pair with
    fresh sides.  The challenge is the second-lowest against the
    second-highest item; picking the higher one earns +1 and ends the episode.
    """

    family = "transitive_inference"
    slots = ((1, 1), (1, 3))
    start = (2, 2)

    def code_vocabulary(self):
        train, holdout = tables.STIMULI[self.family]
        return train + holdout

    def __init__(self, spec, stream=0, overrides=None):
        super().__init__(spec, stream, overrides)
        self.length = int(spec.scale)
        self.walls = np.ones((4, 5), dtype=bool)
        self.walls[1:3, 1:4] = False
        self.region = None
        self.planners = [Planner(self.walls, [s]) for s in self.slots]

    def _sample_layout(self, rng):
        pool = self.spec.stimulus_pool
        chain = [pool[i] for i in rng.choice(len(pool), self.length, replace=False)]
        order = [int(i) for i in rng.permutation(self.length - 1)]
        return {"chain": chain, "demo": order, "side_seed": int(rng.integers(2 ** 31))}

    def _begin(self, layout):
        self.side_rng = np.random.default_rng(layout["side_seed"])
        self.pairs = [(i, i + 1) for i in layout["demo"]] + [(1, self.length - 2)]
        self.pair = 0
        self.attempt_start = 0
        self._present()

    @property
    def challenge(self) -> bool:
        return self.pair == len(self.pairs) - 1

    def _present(self):
        lo, hi = self.pairs[self.pair]
        self.items = (lo, hi) if self.side_rng.random() < 0.5 else (hi, lo)
        self.pos, self.heading = self.start, 0

    def layers(self):
        lay = super().layers()
        for cell, value in zip(self.slots, self.items):
            lay[cell + (slice(CODE0, CODE0 + CODE_DIM),)] = self.codes[self.layout["chain"][value]]
        return lay

    def _advance(self, action):
        self.move(action)
        if self.pos not in self.slots:
            return 0.0, False, {}
        picked = self.items[self.slots.index(self.pos)]
        correct = picked == max(self.items)
        info = {"pair": self.pair, "correct": bool(correct)}
        if self.challenge:
            reward = float(correct)
            self.trial_log.append({"trial": self.pair, "reward": reward, "steps": self.t + 1 - self.attempt_start})
            return reward, True, info
        self.trial_log.append({"trial": self.pair, "reward": 0.0, "steps": self.t + 1 - self.attempt_start})
        if correct:
            self.pair += 1
        self.attempt_start = self.t + 1
        self._present()
        return 0.0, False, info

    def oracle_action(self):
        target = self.items.index(max(self.items))
        return self.planners[target].action(self.pos, self.heading)

    def oracle_steps(self):
        return self.planners[0].steps(self.start, 0) * self.length

    def analytic_max(self):
        return 1.0
