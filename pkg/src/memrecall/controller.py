"""Observation encoders, working-memory cores and the policy/value heads.

Parameters live in a flat mapping under ``encoder/*``, ``core/*`` and
``heads/*``.  All functions accept a leading batch axis; a single unbatched
vector is promoted to a batch of one and squeezed back.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import DimensionError, Tensor


@dataclass
class ModelConfig:
    embed: int = 64
    hidden: int = 128
    key: int = 128
    neighbors: int = 10
    capacity: int = 1024
    epsilon: float = 1e-3
    conv_channels: int = 16
    dtype: str = "float32"


@dataclass
class LSTMState:
    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, batch: int, hidden: int, dtype=np.float32) -> "LSTMState":
        return cls(Tensor(np.zeros((batch, hidden), dtype=dtype)),
                   Tensor(np.zeros((batch, hidden), dtype=dtype)))

    def reset(self, mask) -> "LSTMState":
        """Zero the rows where ``mask`` is true (episode start)."""
        keep = (~np.asarray(mask, dtype=bool)).astype(self.h.dtype)[:, None]
        keep = np.broadcast_to(keep, self.h.shape)
        return LSTMState(dc.where_mask(self.h, keep), dc.where_mask(self.c, keep))

    def detach(self) -> "LSTMState":
        return LSTMState(Tensor(np.array(self.h.data)), Tensor(np.array(self.c.data)))


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_linear(rng, prefix: str, n_in: int, n_out: int, dtype) -> dict[str, np.ndarray]:
    return {
        f"{prefix}_w": _uniform(rng, (n_out, n_in), n_in, dtype),
        f"{prefix}_b": _uniform(rng, (n_out,), n_in, dtype),
    }


def init_encoder(rng, obs_spec, cfg: ModelConfig) -> dict[str, np.ndarray]:
    dt = np.dtype(cfg.dtype)
    if obs_spec.kind == "grid":
        v, _, ch = obs_spec.grid_shape
        f = cfg.conv_channels
        p = {
            "encoder/conv1_w": _uniform(rng, (3, 3, ch, f), 9 * ch, dt),
            "encoder/conv1_b": _uniform(rng, (f,), 9 * ch, dt),
            "encoder/conv2_w": _uniform(rng, (3, 3, f, f), 9 * f, dt),
            "encoder/conv2_b": _uniform(rng, (f,), 9 * f, dt),
        }
        flat = (v - 4) * (v - 4) * f + obs_spec.extra
        p.update(init_linear(rng, "encoder/fc", flat, cfg.embed, dt))
        return p
    p = init_linear(rng, "encoder/l1", obs_spec.size, cfg.embed, dt)
    p.update(init_linear(rng, "encoder/l2", cfg.embed, cfg.embed, dt))
    return p


def _batched(t: Tensor) -> tuple[Tensor, bool]:
    if t.ndim == 1:
        return dc.reshape(t, (1, t.shape[0])), True
    return t, False


def encode(params, obs, obs_spec) -> Tensor:
    """Embed a (batch of) flat observation vector(s) into x_t."""
    obs = obs if isinstance(obs, Tensor) else Tensor(np.asarray(obs, dtype=_param_dtype(params)))
    if obs.shape[-1] != obs_spec.size:
        raise DimensionError(f"observation width {obs.shape[-1]} does not match spec width {obs_spec.size}")
    obs, single = _batched(obs)
    if obs_spec.kind == "grid":
        v, _, ch = obs_spec.grid_shape
        n = obs.shape[0]
        window = dc.reshape(dc.getitem(obs, (slice(None), slice(0, v * v * ch))), (n, v, v, ch))
        h = dc.relu(dc.conv2d(window, params["encoder/conv1_w"], params["encoder/conv1_b"]))
        h = dc.relu(dc.conv2d(h, params["encoder/conv2_w"], params["encoder/conv2_b"]))
        flat = dc.reshape(h, (n, -1))
        if obs_spec.extra:
            extra = dc.getitem(obs, (slice(None), slice(v * v * ch, None)))
            flat = dc.concat([flat, extra], axis=-1)
        x = dc.relu(dc.linear(flat, params["encoder/fc_w"], params["encoder/fc_b"]))
    else:
        h = dc.relu(dc.linear(obs, params["encoder/l1_w"], params["encoder/l1_b"]))
        x = dc.relu(dc.linear(h, params["encoder/l2_w"], params["encoder/l2_b"]))
    return dc.reshape(x, (x.shape[-1],)) if single else x


def _param_dtype(params):
    for name in params.keys():
        return params[name].dtype
    return np.float64


def core_input_width(cfg: ModelConfig, mem: bool) -> int:
    return cfg.embed + (cfg.hidden if mem else 0)


def init_core(rng, kind: str, cfg: ModelConfig, mem: bool) -> dict[str, np.ndarray]:
    dt = np.dtype(cfg.dtype)
    n_in = core_input_width(cfg, mem)
    hid = cfg.hidden
    if kind == "lstm":
        fan = n_in + hid
        b = _uniform(rng, (4 * hid,), fan, dt)
        b[hid:2 * hid] = 1.0  # forget gate
        return {"core/lstm_w": _uniform(rng, (4 * hid, fan), fan, dt), "core/lstm_b": b}
    if kind == "ff":
        p = init_linear(rng, "core/ff1", n_in, hid, dt)
        p.update(init_linear(rng, "core/ff2", hid, hid, dt))
        return p
    raise ValueError(f"unknown core kind {kind!r}")


def _core_in(x: Tensor, m: Tensor | None) -> Tensor:
    return x if m is None else dc.concat([x, m], axis=-1)


def lstm_step(params, x: Tensor, m: Tensor | None, prev: LSTMState) -> LSTMState:
    """One LSTM cell update over the concatenation [x_t, m_t, h_{t-1}].

    Gate order in the packed weight is input, forget, cell, output.
    """
    w = params["core/lstm_w"]
    hid = prev.h.shape[-1]
    inp = _core_in(x, m)
    if inp.shape[-1] + hid != w.shape[1]:
        raise DimensionError(f"LSTM input width {inp.shape[-1]}+{hid} does not match weight {w.shape}")
    z = dc.linear(dc.concat([inp, prev.h], axis=-1), w, params["core/lstm_b"])
    full = slice(None)
    lead = (full,) * (z.ndim - 1)
    i = dc.sigmoid(z[lead + (slice(0, hid),)])
    f = dc.sigmoid(z[lead + (slice(hid, 2 * hid),)])
    g = dc.tanh(z[lead + (slice(2 * hid, 3 * hid),)])
    o = dc.sigmoid(z[lead + (slice(3 * hid, 4 * hid),)])
    c = f * prev.c + i * g
    return LSTMState(o * dc.tanh(c), c)


def ff_step(params, x: Tensor, m: Tensor | None) -> Tensor:
    """Stateless two-layer perceptron standing in for the recurrent core."""
    inp = _core_in(x, m)
    if inp.shape[-1] != params["core/ff1_w"].shape[1]:
        raise DimensionError(f"FF input width {inp.shape[-1]} does not match weight {params['core/ff1_w'].shape}")
    h = dc.relu(dc.linear(inp, params["core/ff1_w"], params["core/ff1_b"]))
    return dc.tanh(dc.linear(h, params["core/ff2_w"], params["core/ff2_b"]))


def init_heads(rng, cfg: ModelConfig, num_actions: int) -> dict[str, np.ndarray]:
    dt = np.dtype(cfg.dtype)
    p = init_linear(rng, "heads/policy", cfg.hidden, num_actions, dt)
    p.update(init_linear(rng, "heads/value", cfg.hidden, 1, dt))
    return p


def heads(params, h: Tensor) -> tuple[Tensor, Tensor]:
    """Raw policy logits and a scalar value per row."""
    if h.shape[-1] != params["heads/policy_w"].shape[1]:
        raise DimensionError(f"head input width {h.shape[-1]} does not match {params['heads/policy_w'].shape}")
    logits = dc.linear(h, params["heads/policy_w"], params["heads/policy_b"])
    value = dc.linear(h, params["heads/value_w"], params["heads/value_b"])
    return logits, dc.reshape(value, value.shape[:-1])
