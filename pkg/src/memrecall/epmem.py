"""Slot-based episodic memory with k-nearest-neighbour reads.

A buffer holds B independent FIFO stores (one per environment).  Each slot
keeps the embedding ``p``, the core output ``v`` and the key ``k`` cached at
write time.  Reads select neighbours on the cached keys but weight them with
keys recomputed from the stored ``(p, v)`` under the current key projection.

Under jumpy backpropagation (the default) stored values are constants, so a
read-dependent loss reaches the key/query projections but never the tensors
that produced a write.  With ``link=True`` writes made during the current
unroll keep their tape linkage and reads route gradient back into them.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import ContractError, DimensionError, Tensor
from .kernels import knn_select


@dataclass
class ReadResult:
    m: Tensor
    neighbors: np.ndarray  # [B, K] slot indices, -1 where fewer than K slots exist
    weights: Tensor        # [B, K], zero on padding
    count: np.ndarray      # [B] neighbours actually used


class EpisodicBuffer:
    """B parallel circular buffers of fixed logical capacity.

    Physical storage grows on demand up to ``capacity`` rows, so short
    episodes never touch the full allocation.
    """

    def __init__(self, capacity: int, embed: int, hidden: int, key: int, batch: int = 1,
                 dtype=np.float32, rows: int = 16):
        if capacity < 1:
            raise ContractError("capacity must be positive")
        self.capacity = capacity
        self.embed, self.hidden, self.key = embed, hidden, key
        self.batch = batch
        self.dtype = np.dtype(dtype)
        rows = max(1, min(capacity, rows))
        self.p = np.zeros((batch, rows, embed), dtype=self.dtype)
        self.v = np.zeros((batch, rows, hidden), dtype=self.dtype)
        self.k = np.zeros((batch, rows, key), dtype=self.dtype)
        self.write_step = np.zeros((batch, rows), dtype=np.int64)
        self.valid = np.zeros((batch, rows), dtype=bool)
        self.live_step = np.full((batch, rows), -1, dtype=np.int64)
        self.count = np.zeros(batch, dtype=np.int64)
        self.next_index = np.zeros(batch, dtype=np.int64)
        self.writes = np.zeros(batch, dtype=np.int64)
        self.live_sources: list[tuple[Tensor, Tensor]] = []

    @property
    def rows(self) -> int:
        return self.p.shape[1]

    def _ensure_rows(self, needed: int) -> None:
        if needed <= self.rows:
            return
        new = min(self.capacity, max(needed, 2 * self.rows))
        extra = new - self.rows

        def grow(a, fill=0):
            pad = np.full((a.shape[0], extra) + a.shape[2:], fill, dtype=a.dtype)
            return np.concatenate([a, pad], axis=1)

        self.p, self.v, self.k = grow(self.p), grow(self.v), grow(self.k)
        self.write_step, self.valid = grow(self.write_step), grow(self.valid, False)
        self.live_step = grow(self.live_step, -1)

    def contents(self, b: int = 0) -> list[int]:
        """write_step of every occupied slot of buffer ``b``, oldest first."""
        return sorted(int(s) for s in self.write_step[b][self.valid[b]])

    def unlink(self) -> None:
        """Forget tape linkage; stored values become plain constants."""
        self.live_step[:] = -1
        self.live_sources = []

    def snapshot(self, b: int) -> "BufferSnapshot":
        used = int(self.valid[b].nonzero()[0].max()) + 1 if self.count[b] else 0
        return BufferSnapshot(
            capacity=self.capacity,
            p=self.p[b, :used].copy(), v=self.v[b, :used].copy(), k=self.k[b, :used].copy(),
            write_step=self.write_step[b, :used].copy(), valid=self.valid[b, :used].copy(),
            count=int(self.count[b]), next_index=int(self.next_index[b]), writes=int(self.writes[b]),
        )

    @classmethod
    def from_snapshots(cls, snaps: list["BufferSnapshot"], embed: int, hidden: int, key: int,
                       dtype=np.float32, headroom: int = 0) -> "EpisodicBuffer":
        cap = snaps[0].capacity
        used = max(len(s.valid) for s in snaps)
        buf = cls(cap, embed, hidden, key, batch=len(snaps), dtype=dtype,
                  rows=min(cap, max(1, used + headroom)))
        for b, s in enumerate(snaps):
            n = len(s.valid)
            buf.p[b, :n], buf.v[b, :n], buf.k[b, :n] = s.p, s.v, s.k
            buf.write_step[b, :n], buf.valid[b, :n] = s.write_step, s.valid
            buf.count[b], buf.next_index[b], buf.writes[b] = s.count, s.next_index, s.writes
        return buf


@dataclass
class BufferSnapshot:
    capacity: int
    p: np.ndarray
    v: np.ndarray
    k: np.ndarray
    write_step: np.ndarray
    valid: np.ndarray
    count: int
    next_index: int
    writes: int

    @classmethod
    def empty(cls, capacity: int, embed: int, hidden: int, key: int, dtype=np.float32):
        z = np.zeros((0,), dtype=np.int64)
        return cls(capacity, np.zeros((0, embed), dtype), np.zeros((0, hidden), dtype),
                   np.zeros((0, key), dtype), z, z.astype(bool), 0, 0, 0)


def _as_batch(t: Tensor, width: int, what: str) -> Tensor:
    if t.ndim == 1:
        t = dc.reshape(t, (1, t.shape[0]))
    if t.shape[-1] != width:
        raise DimensionError(f"{what} width {t.shape[-1]} does not match configured {width}")
    return t


def write(buffer: EpisodicBuffer, x: Tensor, h: Tensor, params, *, jumpy: bool = True,
          link: bool = False) -> tuple[np.ndarray, Tensor]:
    """Store (x, h) and its key in every batch row; returns (slot indices, key tensor).

    The key expression is recorded on the tape: with ``jumpy`` its inputs are
    stop-gradient copies so only ``mem/key_w`` and ``mem/key_b`` can receive
    gradient through it.
    """
    x = _as_batch(x, buffer.embed, "embedding")
    h = _as_batch(h, buffer.hidden, "hidden state")
    if x.shape[0] != buffer.batch or h.shape[0] != buffer.batch:
        raise DimensionError(f"batch {x.shape[0]}/{h.shape[0]} does not match buffer batch {buffer.batch}")
    if jumpy:
        pv = dc.concat([dc.stop_gradient(x), dc.stop_gradient(h)], axis=-1)
    else:
        pv = dc.concat([x, h], axis=-1)
    key = dc.linear(pv, params["mem/key_w"], params["mem/key_b"])
    idx = buffer.next_index.copy()
    buffer._ensure_rows(int(idx.max()) + 1)
    rows = np.arange(buffer.batch)
    buffer.p[rows, idx] = x.data
    buffer.v[rows, idx] = h.data
    buffer.k[rows, idx] = key.data
    buffer.write_step[rows, idx] = buffer.writes
    buffer.valid[rows, idx] = True
    if link:
        buffer.live_step[rows, idx] = len(buffer.live_sources)
        buffer.live_sources.append((x, h))
    else:
        buffer.live_step[rows, idx] = -1
    buffer.writes += 1
    buffer.count = np.minimum(buffer.count + 1, buffer.capacity)
    buffer.next_index = (buffer.next_index + 1) % buffer.capacity
    return idx, key


def query(x: Tensor, h_prev: Tensor, params) -> Tensor:
    """q_t = W_q [x_t, h_{t-1}] + b_q."""
    w = params["mem/query_w"]
    if x.shape[-1] + h_prev.shape[-1] != w.shape[1]:
        raise DimensionError(f"query input width {x.shape[-1]}+{h_prev.shape[-1]} does not match {w.shape}")
    return dc.linear(dc.concat([x, h_prev], axis=-1), w, params["mem/query_b"])


def _gather_values(buffer: EpisodicBuffer, idx: np.ndarray) -> Tensor:
    safe = np.where(idx >= 0, idx, 0)
    rows = np.arange(buffer.batch)[:, None]
    data = np.concatenate([buffer.p[rows, safe], buffer.v[rows, safe]], axis=-1)
    if not buffer.live_sources:
        return Tensor(data)
    src = np.where(idx >= 0, buffer.live_step[rows, safe], -1)
    involved = sorted(int(s) for s in np.unique(src) if s >= 0)
    if not involved:
        return Tensor(data)
    e = buffer.embed
    parents = []
    for s in involved:
        parents.extend(buffer.live_sources[s])

    def back(g):
        out = []
        for s in involved:
            mask = (src == s).astype(g.dtype)[..., None]
            out.append((g[..., :e] * mask).sum(axis=1))
            out.append((g[..., e:] * mask).sum(axis=1))
        return tuple(out)

    return dc.custom_op(data, parents, back, "memory_gather")


def read(buffer: EpisodicBuffer, q: Tensor, params, k: int = 10, eps: float = 1e-3) -> ReadResult:
    """k-NN read: select on cached keys, weight by recomputed keys.

    w_j ∝ 1 / (eps + ||q - (W_k [p_j, v_j] + b_k)||²), normalised to sum to
    one; m = Σ w_j v_j.  An empty buffer yields m = 0 and no neighbours.
    """
    if eps <= 0:
        raise ContractError(f"epsilon must be positive, got {eps}")
    if k < 1:
        raise ContractError(f"neighbour count must be >= 1, got {k}")
    single = q.ndim == 1
    q = _as_batch(q, buffer.key, "query")
    nb = buffer.batch
    diff = buffer.k - q.data[:, None, :]
    dist = (diff * diff).sum(axis=-1)
    idx, count = knn_select(dist, buffer.write_step, buffer.valid, k)
    mask = idx >= 0
    pv = _gather_values(buffer, idx)
    keys = dc.linear(pv, params["mem/key_w"], params["mem/key_b"])
    d2 = dc.sum(dc.square(keys - dc.expand(q, 1, k)), axis=-1)
    inv = dc.where_mask(dc.reciprocal(d2 + eps), mask)
    empty = (count == 0).astype(inv.dtype)
    norm = dc.sum(inv, axis=1) + Tensor(empty)
    w = inv * dc.expand(dc.reciprocal(norm), 1, k)
    values = dc.getitem(pv, (slice(None), slice(None), slice(buffer.embed, None)))
    m = dc.reshape(dc.bmm(dc.reshape(w, (nb, 1, k)), values), (nb, buffer.hidden))
    if single:
        m = dc.reshape(m, (buffer.hidden,))
    return ReadResult(m, idx, w, count)


def reset(buffer: EpisodicBuffer, mask=None) -> EpisodicBuffer:
    """Wipe the selected rows (all rows when ``mask`` is None)."""
    rows = np.ones(buffer.batch, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    buffer.p[rows] = 0
    buffer.v[rows] = 0
    buffer.k[rows] = 0
    buffer.write_step[rows] = 0
    buffer.valid[rows] = False
    buffer.live_step[rows] = -1
    buffer.count[rows] = 0
    buffer.next_index[rows] = 0
    buffer.writes[rows] = 0
    return buffer


def init_memory_params(rng, embed: int, hidden: int, key: int, dtype=np.float32) -> dict[str, np.ndarray]:
    fan = embed + hidden
    bound = 1.0 / np.sqrt(fan)
    dt = np.dtype(dtype)
    return {
        "mem/key_w": rng.uniform(-bound, bound, (key, fan)).astype(dt),
        "mem/key_b": rng.uniform(-bound, bound, (key,)).astype(dt),
        "mem/query_w": rng.uniform(-bound, bound, (key, fan)).astype(dt),
        "mem/query_b": rng.uniform(-bound, bound, (key,)).astype(dt),
    }


@dataclass
class MemoryTrace:
    """Per-episode read/write log for debugging (one row per step)."""

    rows: list[tuple] = field(default_factory=list)

    def record(self, step: int, write_index: int, neighbors, weights) -> None:
        nbr = [int(i) for i in neighbors if i >= 0]
        wts = [float(w) for w in np.asarray(weights)[: len(nbr)]]
        self.rows.append((step, int(write_index), nbr, wts))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["step", "write_index", "neighbor_indices", "weights"])
            for step, wi, nbr, wts in self.rows:
                out.writerow([step, wi, " ".join(map(str, nbr)), " ".join(f"{w:.17g}" for w in wts)])
