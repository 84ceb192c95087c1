"""Off-policy actor-critic training with V-trace corrections.

Actors run the agent forward without a tape, carrying controller state and
the episodic buffer across consecutive unrolls of an episode.  The learner
replays each unroll teacher-forced from the recorded start state and memory
snapshot, adds the configured auxiliary loss and applies one optimizer step.
"""
from __future__ import annotations

import csv
import os
from types import SimpleNamespace
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import auxloss, controller, epmem
from . import diffcore as dc
from .diffcore import ContractError, DimensionError, NumericError, ParameterSet, Tensor
from .kernels import vtrace_scan


# --------------------------------------------------------------------------
# configuration


@dataclass
class VTraceConfig:
    gamma: float = 0.99
    rho_bar: float = 1.0
    c_bar: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ContractError(f"discount must lie in [0, 1), got {self.gamma}")
        if self.rho_bar < 1.0 or self.c_bar < 1.0:
            raise ContractError("importance clips must be >= 1")
        if self.rho_bar < self.c_bar:
            raise ContractError("rho_bar must be >= c_bar")


_OPT_DEFAULT_EPS = {"adam": 1e-4, "rmsprop": 0.1}


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float | None = None
    momentum: float = 0.0
    decay: float = 0.99
    clip_norm: float | None = 40.0

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in _OPT_DEFAULT_EPS:
            raise ContractError(f"unknown optimizer {self.kind!r}; expected adam or rmsprop")
        if self.epsilon is None:
            self.epsilon = _OPT_DEFAULT_EPS[self.kind]
        if self.learning_rate < 0:
            raise ContractError("learning rate must be non-negative")


class Optimizer:
    """Adam or RMSProp over a ParameterSet, with optional global-norm clipping."""

    def __init__(self, config: OptimizerConfig, params: ParameterSet):
        self.config = config
        self.slots = {n: (np.zeros_like(t.data), np.zeros_like(t.data)) for n, t in params.items()}
        self.steps = 0

    def apply(self, params: ParameterSet, grads: dict[str, np.ndarray]) -> float:
        """Update in place; returns the gradient norm before clipping."""
        cfg = self.config
        norm = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))
        scale = 1.0
        if cfg.clip_norm is not None and norm > cfg.clip_norm:
            scale = cfg.clip_norm / norm
        self.steps += 1
        lr = cfg.learning_rate
        for name, g in grads.items():
            p = params[name]
            g = g * scale if scale != 1.0 else g
            a, b = self.slots[name]
            if cfg.kind == "adam":
                a *= cfg.beta1
                a += (1 - cfg.beta1) * g
                b *= cfg.beta2
                b += (1 - cfg.beta2) * g * g
                mhat = a / (1 - cfg.beta1 ** self.steps)
                vhat = b / (1 - cfg.beta2 ** self.steps)
                p.data = (p.data - lr * mhat / (np.sqrt(vhat) + cfg.epsilon)).astype(p.dtype)
            else:
                b *= cfg.decay
                b += (1 - cfg.decay) * g * g
                a *= cfg.momentum
                a += lr * g / np.sqrt(b + cfg.epsilon)
                p.data = (p.data - a).astype(p.dtype)
        return norm


# --------------------------------------------------------------------------
# trajectories and V-trace


@dataclass
class Trajectory:
    """One actor unroll of length T.

    ``dones[t]`` marks that the episode ended after ``actions[t]``;
    ``observations[t + 1]`` then starts the next episode.
    """

    observations: np.ndarray      # [T+1, D]
    actions: np.ndarray           # [T]
    rewards: np.ndarray           # [T]
    behavior_logits: np.ndarray   # [T, A]
    dones: np.ndarray             # [T]
    initial_h: np.ndarray         # [H]
    initial_c: np.ndarray         # [H]
    initial_memory: epmem.BufferSnapshot | None = None
    prev_action: int = -1
    prev_reward: float = 0.0
    params_version: int = 0
    episode_returns: list = field(default_factory=list)

    def __post_init__(self):
        t = len(self.actions)
        if (len(self.observations) != t + 1 or len(self.rewards) != t or len(self.dones) != t
                or len(self.behavior_logits) != t):
            raise DimensionError(
                f"trajectory fields disagree on T: obs {len(self.observations)}, actions {t}, "
                f"rewards {len(self.rewards)}, logits {len(self.behavior_logits)}, dones {len(self.dones)}")

    @property
    def length(self) -> int:
        return len(self.actions)


def _log_softmax_np(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def vtrace_targets(traj, values, target_logits, config: VTraceConfig):
    """V-trace value targets v_s and policy-gradient advantages for one unroll.

    ``values`` holds V(x_0..x_T) including the bootstrap; ``target_logits``
    are the learner policy's logits for steps 0..T-1.  Returns float64
    arrays ``(vs, advantages)`` of length T.
    """
    actions = np.asarray(traj.actions, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    t_len = len(actions)
    if values.shape != (t_len + 1,):
        raise DimensionError(f"values must have shape ({t_len + 1},), got {values.shape}")
    target_logits = np.asarray(target_logits, dtype=np.float64)
    if target_logits.shape != np.shape(traj.behavior_logits):
        raise DimensionError(f"target logits {target_logits.shape} vs behaviour {np.shape(traj.behavior_logits)}")
    rows = np.arange(t_len)
    log_mu = _log_softmax_np(traj.behavior_logits)[rows, actions]
    mu = np.exp(log_mu)
    bad = np.flatnonzero(mu < 1e-20)
    if bad.size:
        raise NumericError(f"behaviour probability underflow at step {int(bad[0])}: mu={mu[bad[0]]:.3g}")
    log_pi = _log_softmax_np(target_logits)[rows, actions]
    ratio = np.exp(log_pi - log_mu)
    rho = np.minimum(config.rho_bar, ratio)
    cs = np.minimum(config.c_bar, ratio)
    rewards = np.asarray(traj.rewards, dtype=np.float64)
    disc = config.gamma * (1.0 - np.asarray(traj.dones, dtype=np.float64))
    deltas = rho * (rewards + disc * values[1:] - values[:-1])
    vs = values[:-1] + np.asarray(vtrace_scan(deltas, disc, cs))
    vs_next = np.append(vs[1:], values[-1])
    adv = rho * (rewards + disc * vs_next - values[:-1])
    return vs, adv


def _rl_terms(actions, policy_logits: Tensor, values: Tensor, vs, advantages,
              entropy_cost: float, baseline_cost: float):
    actions = np.asarray(actions, dtype=np.int64)
    if policy_logits.shape[:-1] != actions.shape:
        raise DimensionError(f"logits {policy_logits.shape} do not align with actions {actions.shape}")
    if values.shape != actions.shape:
        raise DimensionError(f"values {values.shape} do not align with actions {actions.shape}")
    dt = policy_logits.dtype
    adv = np.asarray(advantages, dtype=dt).reshape(actions.shape)
    vs = np.asarray(vs, dtype=dt).reshape(actions.shape)
    policy = dc.sum(dc.softmax_xent(policy_logits, actions) * Tensor(adv))
    baseline = dc.sum(dc.square(Tensor(vs) - values)) * (0.5 * baseline_cost)
    logp = dc.log_softmax(policy_logits)
    entropy = dc.neg(dc.sum(dc.exp(logp) * logp))
    return policy, baseline, entropy * (-entropy_cost)


def rl_loss(traj, policy_logits: Tensor, values: Tensor, vtrace_out, entropy_cost: float = 0.01,
            baseline_cost: float = 0.5) -> Tensor:
    """Policy-gradient, baseline and entropy terms summed over the unroll.

    ``traj`` may be a Trajectory or the action array itself; ``values`` are
    V(x_0..x_{T-1}) without the bootstrap.  ``vtrace_out`` is the
    ``(vs, advantages)`` pair, treated as constants.
    """
    actions = traj.actions if hasattr(traj, "actions") else traj
    vs, adv = vtrace_out
    p, b, e = _rl_terms(actions, policy_logits, values, vs, adv, entropy_cost, baseline_cost)
    return p + b + e


# --------------------------------------------------------------------------
# agent


def _norm_ablation(ablation) -> tuple[str, bool, str, bool]:
    """Read (controller, mem, aux, jumpy) from a config object or a mapping."""
    if isinstance(ablation, dict):
        unknown = set(ablation) - {"controller", "mem", "aux", "jumpy"}
        if unknown:
            raise ContractError(f"unknown ablation fields {sorted(unknown)}")
        ablation = SimpleNamespace(**ablation)
    kind = str(getattr(ablation, "controller", "lstm")).lower()
    if kind not in ("lstm", "ff"):
        raise ContractError(f"unknown controller {kind!r}")
    mem = bool(getattr(ablation, "mem", False))
    aux = str(getattr(ablation, "aux", "none") or "none").lower()
    if aux not in ("none", "cpc", "rec"):
        raise ContractError(f"unknown auxiliary loss {aux!r}")
    jumpy = bool(getattr(ablation, "jumpy", True))
    return kind, mem, aux, jumpy


@dataclass
class StepOutput:
    logits: Tensor
    value: Tensor
    state: controller.LSTMState
    x: Tensor
    h: Tensor
    read: epmem.ReadResult | None


class Agent:
    """Architecture for one ablation: parameter layout plus the per-step forward pass."""

    def __init__(self, ablation, obs_spec, num_actions: int, model: controller.ModelConfig | None = None,
                 cpc: auxloss.CpcConfig | None = None, rec: auxloss.RecConfig | None = None):
        self.ablation = ablation
        self.kind, self.mem, self.aux, jumpy = _norm_ablation(ablation)
        # Detached writes are only switched off for the one ablation that studies it.
        self.jumpy = jumpy if (self.kind == "lstm" and self.mem and self.aux == "cpc") else True
        self.obs_spec = obs_spec
        self.num_actions = num_actions
        self.model = model or controller.ModelConfig()
        self.cpc = cpc or auxloss.CpcConfig()
        self.rec = rec or auxloss.RecConfig()
        self.dtype = np.dtype(self.model.dtype)

    def init_params(self, seed: int) -> ParameterSet:
        rng = np.random.default_rng(seed)
        m = self.model
        arrays = {}
        arrays.update(controller.init_encoder(rng, self.obs_spec, m))
        arrays.update(controller.init_core(rng, self.kind, m, self.mem))
        arrays.update(controller.init_heads(rng, m, self.num_actions))
        if self.mem:
            arrays.update(epmem.init_memory_params(rng, m.embed, m.hidden, m.key, self.dtype))
        if self.aux == "cpc":
            arrays.update(auxloss.init_cpc_params(rng, self.cpc.steps, m.embed, m.hidden, self.dtype))
        elif self.aux == "rec":
            arrays.update(auxloss.init_rec_params(rng, m.hidden, m.embed, self.num_actions,
                                                  self.obs_spec.size, self.dtype))
        return ParameterSet(arrays)

    def initial_state(self, batch: int) -> controller.LSTMState:
        return controller.LSTMState.zeros(batch, self.model.hidden, self.dtype)

    def new_buffer(self, batch: int) -> epmem.EpisodicBuffer | None:
        if not self.mem:
            return None
        m = self.model
        return epmem.EpisodicBuffer(m.capacity, m.embed, m.hidden, m.key, batch=batch, dtype=self.dtype)

    def step(self, params, obs, state: controller.LSTMState, buffer, *, link: bool = False) -> StepOutput:
        """Read (query from x_t and h_{t-1}), update the core, then write (x_t, h_t)."""
        obs = obs if isinstance(obs, Tensor) else Tensor(np.asarray(obs, dtype=self.dtype))
        x = controller.encode(params, obs, self.obs_spec)
        m = None
        res = None
        if self.mem:
            q = epmem.query(x, state.h, params)
            res = epmem.read(buffer, q, params, k=self.model.neighbors, eps=self.model.epsilon)
            m = res.m
        if self.kind == "lstm":
            new = controller.lstm_step(params, x, m, state)
            h = new.h
        else:
            h = controller.ff_step(params, x, m)
            new = controller.LSTMState(h, state.c)
        if self.mem:
            epmem.write(buffer, x, h, params, jumpy=self.jumpy, link=link)
        logits, value = controller.heads(params, h)
        return StepOutput(logits, value, new, x, h, res)


# --------------------------------------------------------------------------
# learner


@dataclass
class LossConfig:
    entropy_cost: float = 0.01
    baseline_cost: float = 0.5


class Learner:
    """Owns the parameters and optimizer; consumes batches of trajectories."""

    def __init__(self, agent: Agent, params: ParameterSet, optimizer: OptimizerConfig | None = None,
                 vtrace: VTraceConfig | None = None, loss: LossConfig | None = None,
                 dump_dir: str | os.PathLike | None = None):
        self.agent = agent
        self.params = params
        self.opt_config = optimizer or OptimizerConfig()
        self.optimizer = Optimizer(self.opt_config, params)
        self.vtrace = vtrace or VTraceConfig()
        self.loss = loss or LossConfig()
        self.dump_dir = Path(dump_dir) if dump_dir is not None else None

    def snapshot(self) -> dc.ParameterSnapshot:
        return self.params.snapshot()

    def replay(self, batch: list[Trajectory], params=None) -> dict:
        """Teacher-forced forward pass over a batch on the tape."""
        agent = self.agent
        params = self.params if params is None else params
        nb = len(batch)
        t_len = batch[0].length
        if any(tr.length != t_len for tr in batch):
            raise DimensionError("all trajectories in a batch must share T")
        dt = agent.dtype
        obs = np.stack([tr.observations for tr in batch]).astype(dt)        # [B, T+1, D]
        dones = np.stack([tr.dones for tr in batch]).astype(bool)            # [B, T]
        state = controller.LSTMState(Tensor(np.stack([tr.initial_h for tr in batch]).astype(dt)),
                                     Tensor(np.stack([tr.initial_c for tr in batch]).astype(dt)))
        buffer = None
        link = agent.mem and not agent.jumpy
        if agent.mem:
            m = agent.model
            snaps = [tr.initial_memory or epmem.BufferSnapshot.empty(m.capacity, m.embed, m.hidden, m.key, dt)
                     for tr in batch]
            buffer = epmem.EpisodicBuffer.from_snapshots(snaps, m.embed, m.hidden, m.key, dt, headroom=t_len + 1)
        logits, values, hs, xs = [], [], [], []
        for t in range(t_len + 1):
            if t > 0 and dones[:, t - 1].any():
                mask = dones[:, t - 1]
                state = state.reset(mask)
                if buffer is not None:
                    epmem.reset(buffer, mask)
            out = agent.step(params, obs[:, t], state, buffer, link=link)
            state = out.state
            values.append(out.value)
            if t < t_len:
                logits.append(out.logits)
                hs.append(out.h)
                xs.append(out.x)
        if buffer is not None:
            buffer.unlink()
        return {
            "logits": dc.stack(logits, axis=1),   # [B, T, A]
            "values": dc.stack(values, axis=1),   # [B, T+1]
            "h": dc.stack(hs, axis=1),            # [B, T, H]
            "x": dc.stack(xs, axis=1),            # [B, T, E]
        }

    def losses(self, batch: list[Trajectory], params=None) -> dict:
        agent = self.agent
        out = self.replay(batch, params)
        nb = len(batch)
        t_len = batch[0].length
        vs = np.zeros((nb, t_len))
        adv = np.zeros((nb, t_len))
        for b, tr in enumerate(batch):
            vs[b], adv[b] = vtrace_targets(tr, out["values"].data[b], out["logits"].data[b], self.vtrace)
        actions = np.stack([tr.actions for tr in batch]).astype(np.int64)
        values = dc.getitem(out["values"], (slice(None), slice(0, t_len)))
        p, bl, ent = _rl_terms(actions, out["logits"], values, vs, adv,
                               self.loss.entropy_cost, self.loss.baseline_cost)
        rl = (p + bl + ent) * (1.0 / nb)
        aux = None
        if agent.aux == "cpc":
            cfg = auxloss.CpcConfig(min(agent.cpc.steps, t_len - 1), agent.cpc.weight)
            aux = auxloss.cpc_loss(out["h"], out["x"], self.params if params is None else params, cfg)
        elif agent.aux == "rec":
            prev_a = np.empty((nb, t_len), dtype=np.int64)
            prev_r = np.empty((nb, t_len))
            for b, tr in enumerate(batch):
                prev_a[b, 0], prev_r[b, 0] = tr.prev_action, tr.prev_reward
                prev_a[b, 1:], prev_r[b, 1:] = tr.actions[:-1], tr.rewards[:-1]
                start = np.flatnonzero(tr.dones[:-1]) + 1
                prev_a[b, start], prev_r[b, start] = -1, 0.0
            obs = np.stack([tr.observations[:t_len] for tr in batch])
            aux = auxloss.rec_loss(out["h"], prev_r, prev_a, obs, self.params if params is None else params,
                                   agent.rec, agent.num_actions)
        total = rl if aux is None else rl + aux
        return {"total": total, "rl": rl, "aux": aux, "policy": p, "baseline": bl, "entropy": ent,
                "vs": vs, "advantages": adv, "replay": out}

    def train_step(self, batch: list[Trajectory]) -> dict:
        """One optimizer update; raises NumericError (after dumping state) on non-finite loss."""
        parts = self.losses(batch)
        total = parts["total"]
        if not np.isfinite(total.data).all():
            self._dump(batch, "non-finite loss")
        grads = dc.backward(total, self.params)
        if not all(np.isfinite(g).all() for g in grads.values()):
            self._dump(batch, "non-finite gradient")
        norm = self.optimizer.apply(self.params, grads)
        self.params.bump()
        return {
            "total_loss": float(total.data),
            "rl_loss": float(parts["rl"].data),
            "aux_loss": float(parts["aux"].data) if parts["aux"] is not None else 0.0,
            "grad_norm": norm,
            "params_version": self.params.version,
        }

    def _dump(self, batch, reason: str):
        where = ""
        if self.dump_dir is not None:
            self.dump_dir.mkdir(parents=True, exist_ok=True)
            path = self.dump_dir / f"nonfinite_v{self.params.version}.npz"
            arrays = {f"param/{n}": a for n, a in self.params.arrays().items()}
            for b, tr in enumerate(batch):
                arrays[f"traj{b}/observations"] = tr.observations
                arrays[f"traj{b}/actions"] = tr.actions
                arrays[f"traj{b}/rewards"] = tr.rewards
                arrays[f"traj{b}/behavior_logits"] = tr.behavior_logits
            np.savez(path, **arrays)
            where = f"; state dumped to {path}"
        raise NumericError(f"{reason} at params version {self.params.version}{where}")


def train_step(learner: Learner, batch: list[Trajectory]) -> dict:
    return learner.train_step(batch)


# --------------------------------------------------------------------------
# actors


class ActorWorker:
    """Runs a batch of environments with a (possibly stale) parameter snapshot.

    Controller state and memory persist across unrolls and are wiped at
    episode boundaries.  ``greedy`` picks the arg-max action instead of
    sampling.
    """

    def __init__(self, envs, agent: Agent, unroll: int, seed: int = 0, greedy: bool = False):
        if unroll < 1:
            raise ContractError("unroll length must be >= 1")
        self.envs = list(envs)
        self.agent = agent
        self.unroll = unroll
        self.greedy = greedy
        self.rng = np.random.default_rng(seed)
        n = len(self.envs)
        self.state = agent.initial_state(n)
        self.buffer = agent.new_buffer(n)
        self.obs = np.stack([np.asarray(e.reset(), dtype=agent.dtype) for e in self.envs])
        self.prev_action = np.full(n, -1, dtype=np.int64)
        self.prev_reward = np.zeros(n)
        self.returns = np.zeros(n)
        self.completed: list[tuple[int, float]] = []  # (env index, episode return)

    def _act(self, logits: np.ndarray) -> np.ndarray:
        if self.greedy:
            return logits.argmax(axis=-1)
        logp = _log_softmax_np(logits)
        u = self.rng.random(len(logits))
        cdf = np.cumsum(np.exp(logp), axis=-1)
        return np.minimum((cdf < u[:, None] * cdf[:, -1:]).sum(axis=-1), logits.shape[-1] - 1)

    def rollout(self, snapshot) -> list[Trajectory]:
        agent = self.agent
        n, t_len = len(self.envs), self.unroll
        h0, c0 = self.state.h.data.copy(), self.state.c.data.copy()
        mems = [self.buffer.snapshot(b) for b in range(n)] if self.buffer is not None else [None] * n
        pa0, pr0 = self.prev_action.copy(), self.prev_reward.copy()
        obs = np.zeros((n, t_len + 1, agent.obs_spec.size), dtype=agent.dtype)
        acts = np.zeros((n, t_len), dtype=np.int64)
        rews = np.zeros((n, t_len))
        dones = np.zeros((n, t_len), dtype=bool)
        blog = np.zeros((n, t_len, agent.num_actions))
        finished = [[] for _ in range(n)]
        with dc.no_grad():
            for t in range(t_len):
                obs[:, t] = self.obs
                out = agent.step(snapshot, self.obs, self.state, self.buffer)
                logits = np.asarray(out.logits.data, dtype=np.float64)
                a = self._act(logits)
                blog[:, t], acts[:, t] = logits, a
                self.state = out.state
                for i, env in enumerate(self.envs):
                    res = env.step(int(a[i]))
                    rews[i, t] = res.reward
                    self.returns[i] += res.reward
                    self.prev_action[i], self.prev_reward[i] = a[i], res.reward
                    if res.done:
                        dones[i, t] = True
                        finished[i].append(float(self.returns[i]))
                        self.completed.append((i, float(self.returns[i])))
                        self.returns[i] = 0.0
                        self.prev_action[i], self.prev_reward[i] = -1, 0.0
                        self.obs[i] = env.reset()
                    else:
                        self.obs[i] = res.observation
                if dones[:, t].any():
                    self.state = self.state.reset(dones[:, t])
                    if self.buffer is not None:
                        epmem.reset(self.buffer, dones[:, t])
            obs[:, t_len] = self.obs
        version = getattr(snapshot, "version", 0)
        return [Trajectory(obs[i], acts[i], rews[i], blog[i], dones[i], h0[i], c0[i], mems[i],
                           int(pa0[i]), float(pr0[i]), version, finished[i]) for i in range(n)]


def actor_rollout(worker: ActorWorker, snapshot) -> list[Trajectory]:
    """Generate one unroll per environment of ``worker`` under ``snapshot``."""
    return worker.rollout(snapshot)


# --------------------------------------------------------------------------
# metrics


METRIC_COLUMNS = ("step", "episode_return", "total_loss", "rl_loss", "aux_loss", "grad_norm", "params_version")


class MetricsWriter:
    """Append-only CSV of learner metrics."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        new = not self.path.exists() or self.path.stat().st_size == 0
        self._fh = open(self.path, "a", newline="")
        self._out = csv.writer(self._fh)
        if new:
            self._out.writerow(METRIC_COLUMNS)

    def write(self, step: int, episode_return: float, metrics: dict) -> None:
        ret = "" if episode_return is None or not np.isfinite(episode_return) else f"{episode_return:.6g}"
        self._out.writerow([step, ret] + [f"{metrics[c]:.9g}" if c != "params_version" else metrics[c]
                                          for c in METRIC_COLUMNS[2:]])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
