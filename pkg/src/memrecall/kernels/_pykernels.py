"""Pure numpy implementations of the hot loops.

These mirror ``_ckernels.pyx`` exactly and are used when the compiled
extension is unavailable or ``MEMRECALL_PURE_PYTHON=1`` is set.
"""
from __future__ import annotations

import numpy as np


def knn_select(dist2, write_step, valid, k):
    dist2 = np.asarray(dist2, dtype=np.float64)
    write_step = np.asarray(write_step, dtype=np.int64)
    valid = np.asarray(valid, dtype=bool)
    nb, nc = dist2.shape
    idx = np.full((nb, k), -1, dtype=np.int64)
    count = np.zeros(nb, dtype=np.int64)
    for b in range(nb):
        cand = np.flatnonzero(valid[b])
        if cand.size == 0:
            continue
        # lexsort: last key is primary
        order = np.lexsort((cand, write_step[b, cand], dist2[b, cand]))
        take = cand[order[:k]]
        idx[b, : take.size] = take
        count[b] = take.size
    return idx, count


def vtrace_scan(deltas, discounts, cs):
    deltas = np.asarray(deltas, dtype=np.float64)
    discounts = np.asarray(discounts, dtype=np.float64)
    cs = np.asarray(cs, dtype=np.float64)
    out = np.zeros_like(deltas)
    acc = np.zeros(deltas.shape[1:], dtype=np.float64)
    for t in range(deltas.shape[0] - 1, -1, -1):
        acc = deltas[t] + discounts[t] * cs[t] * acc
        out[t] = acc
    return out


def ewma(x, alpha):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    if x.size == 0:
        return out
    s = x[0]
    out[0] = s
    for i in range(1, x.size):
        s = alpha * x[i] + (1.0 - alpha) * s
        out[i] = s
    return out


def rolling_mean(x, window):
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n == 0:
        return np.empty(0)
    if n < window:
        return np.array([x.mean()])
    out = np.empty(n - window + 1)
    for i in range(n - window + 1):
        out[i] = x[i : i + window].sum() / window
    return out


def distance_field(next_state, goal_mask):
    """Steps-to-goal for every state of a deterministic transition table."""
    next_state = np.asarray(next_state, dtype=np.int64)
    goal = np.asarray(goal_mask, dtype=bool)
    n = next_state.shape[0]
    big = np.iinfo(np.int64).max // 4
    dist = np.full(n, big, dtype=np.int64)
    dist[goal] = 0
    while True:
        cand = dist[next_state].min(axis=1) + 1
        new = np.where(goal, 0, np.minimum(dist, cand))
        if np.array_equal(new, dist):
            break
        dist = new
    dist[dist >= big] = -1
    return dist
