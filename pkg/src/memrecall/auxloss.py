"""Auxiliary unsupervised losses: contrastive predictive coding and reconstruction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import ContractError, DimensionError, NumericError, Tensor


@dataclass
class CpcConfig:
    steps: int = 10
    weight: float = 1.0


@dataclass
class RecConfig:
    c_image: float = 1.0
    c_action: float = 1.0
    c_reward: float = 1.0

    def __post_init__(self):
        if min(self.c_image, self.c_action, self.c_reward) < 0:
            raise ContractError("reconstruction costs must be non-negative")


def init_cpc_params(rng, steps: int, embed: int, hidden: int, dtype=np.float32) -> dict[str, np.ndarray]:
    bound = 1.0 / np.sqrt(hidden)
    return {f"cpc/w{k}": rng.uniform(-bound, bound, (embed, hidden)).astype(dtype)
            for k in range(1, steps + 1)}


def init_rec_params(rng, hidden: int, embed: int, num_actions: int, obs_size: int,
                    dtype=np.float32) -> dict[str, np.ndarray]:
    def lin(n_in, n_out):
        b = 1.0 / np.sqrt(n_in)
        return (rng.uniform(-b, b, (n_out, n_in)).astype(dtype),
                rng.uniform(-b, b, (n_out,)).astype(dtype))

    p = {}
    p["rec/reward_w"], p["rec/reward_b"] = lin(hidden, 1)
    p["rec/action_w"], p["rec/action_b"] = lin(hidden, num_actions)
    p["rec/image_l1_w"], p["rec/image_l1_b"] = lin(hidden, embed)
    p["rec/image_l2_w"], p["rec/image_l2_b"] = lin(embed, obs_size)
    return p


def cpc_score(x_future: Tensor, h: Tensor, w: Tensor) -> Tensor:
    """exp(x_futureᵀ W h): the log-bilinear density score."""
    if w.shape != (x_future.shape[-1], h.shape[-1]):
        raise DimensionError(f"score matrix {w.shape} does not match x {x_future.shape} / h {h.shape}")
    wh = dc.linear(dc.reshape(h, (1, h.shape[-1])), w)
    s = dc.exp(dc.sum(dc.reshape(wh, x_future.shape) * x_future))
    if not np.isfinite(s.data):
        raise NumericError("cpc score overflowed")
    return s


def _batch_major(t: Tensor) -> tuple[Tensor, bool]:
    if t.ndim == 2:
        return dc.reshape(t, (1,) + t.shape), True
    return t, False


def cpc_loss(h_states: Tensor, x_embeds: Tensor, params, config: CpcConfig) -> Tensor:
    """Mean InfoNCE cross-entropy over every (t, k) pair, times ``config.weight``.

    For step size k the candidates for anchor h_t are the embeddings
    x_{k}, ..., x_{T-1} (0-based): the positive x_{t+k} plus the other
    k-step futures of the same unroll.  Targets are stop-gradient.
    Shapes: [T, width] or [B, T, width].
    """
    h, _ = _batch_major(h_states)
    x, _ = _batch_major(x_embeds)
    nb, nt = h.shape[0], h.shape[1]
    if nt < 2:
        raise ContractError(f"cpc needs at least two steps, got T={nt}")
    if x.shape[:2] != (nb, nt):
        raise DimensionError(f"h {h.shape} and x {x.shape} disagree on batch/time")
    if not 1 <= config.steps <= nt - 1:
        raise ContractError(f"cpc steps must lie in [1, T-1]={nt - 1}, got {config.steps}")
    x = dc.stop_gradient(x)
    full = slice(None)
    total = None
    pairs = 0
    for k in range(1, config.steps + 1):
        n = nt - k
        anchors = dc.getitem(h, (full, slice(0, n)))
        futures = dc.getitem(x, (full, slice(k, nt)))
        pred = dc.linear(anchors, params[f"cpc/w{k}"])            # [B, n, E]
        scores = dc.bmm(pred, dc.transpose(futures, (0, 2, 1)))  # [B, n, n]
        target = np.broadcast_to(np.arange(n), (nb, n))
        term = dc.sum(dc.softmax_xent(scores, target))
        total = term if total is None else total + term
        pairs += nb * n
    return total * (config.weight / pairs)


def rec_loss(h_states: Tensor, prev_rewards, prev_actions, observations, params,
             config: RecConfig, num_actions: int) -> Tensor:
    """c_image·L_image + c_action·L_action + c_reward·L_reward.

    Reward and action terms are halved sums of squared errors of linear
    projections of h_t; the image term is the summed sigmoid cross-entropy of
    the decoded observation.  Sums run over time and are averaged over batch.
    ``prev_actions`` uses -1 for "no previous action" (all-zero target).
    """
    h, _ = _batch_major(h_states)
    nb, nt = h.shape[:2]
    r = np.asarray(prev_rewards, dtype=h.dtype).reshape(nb, nt)
    a = np.asarray(prev_actions, dtype=np.int64).reshape(nb, nt)
    obs = np.asarray(observations, dtype=h.dtype).reshape(nb, nt, -1)
    if obs.size and (obs.min() < 0 or obs.max() > 1):
        raise ContractError("observations must be scaled into [0, 1] for the image term")
    r_hat = dc.reshape(dc.linear(h, params["rec/reward_w"], params["rec/reward_b"]), (nb, nt))
    l_reward = dc.sum(dc.square(r_hat - Tensor(r))) * 0.5
    onehot = np.zeros((nb, nt, num_actions), dtype=h.dtype)
    bi, ti = np.nonzero(a >= 0)
    onehot[bi, ti, a[bi, ti]] = 1.0
    a_hat = dc.linear(h, params["rec/action_w"], params["rec/action_b"])
    l_action = dc.sum(dc.square(a_hat - Tensor(onehot))) * 0.5
    z = dc.relu(dc.linear(h, params["rec/image_l1_w"], params["rec/image_l1_b"]))
    logits = dc.linear(z, params["rec/image_l2_w"], params["rec/image_l2_b"])
    l_image = dc.sum(dc.sigmoid_xent(logits, obs))
    total = l_image * config.c_image + l_action * config.c_action + l_reward * config.c_reward
    return total * (1.0 / nb)
