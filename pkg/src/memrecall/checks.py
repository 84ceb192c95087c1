"""Finite-difference checks of the model's differentiable pieces at float64."""
from __future__ import annotations

import numpy as np

from . import auxloss, controller, epmem, learner
from . import diffcore as dc
from .diffcore import ParameterSet, Tensor
from .taskforge.base import ObsSpec

TOLERANCE = 1e-4
STEP = 1e-5


def _small_model() -> controller.ModelConfig:
    return controller.ModelConfig(embed=6, hidden=5, key=4, neighbors=3, capacity=16,
                                  epsilon=1e-3, conv_channels=2, dtype="float64")


def lstm_mem_step(seed: int = 0) -> dc.GradCheckReport:
    """One full LSTM+MEM step: encode, query, read, LSTM update, heads."""
    rng = np.random.default_rng(seed)
    spec = ObsSpec("flat", 7)
    agent = learner.Agent({"controller": "lstm", "mem": True, "aux": "none"}, spec, 4, _small_model())
    params = agent.init_params(seed)
    buf = agent.new_buffer(2)
    with dc.no_grad():
        for _ in range(5):
            epmem.write(buf, Tensor(rng.normal(size=(2, 6))), Tensor(rng.normal(size=(2, 5))), params)
    obs = rng.uniform(size=(2, 7))
    state = controller.LSTMState(Tensor(rng.normal(size=(2, 5)) * 0.5), Tensor(rng.normal(size=(2, 5)) * 0.5))
    c_logit, c_value = rng.normal(size=(2, 4)), rng.normal(size=(2,))

    snaps = [buf.snapshot(b) for b in range(2)]
    m = agent.model

    def fn():
        fresh = epmem.EpisodicBuffer.from_snapshots(snaps, m.embed, m.hidden, m.key, np.float64, headroom=1)
        out = agent.step(params, obs, state, fresh)
        return dc.sum(out.logits * Tensor(c_logit)) + dc.sum(out.value * Tensor(c_value)) \
            + dc.sum(out.state.c * out.state.c)

    return dc.grad_check(fn, {n: params[n] for n in params.keys()}, h=STEP, tol=TOLERANCE)


def cpc(seed: int = 0, t_len: int = 6, steps: int = 3) -> dc.GradCheckReport:
    rng = np.random.default_rng(seed)
    embed, hidden = 4, 5
    params = ParameterSet(auxloss.init_cpc_params(rng, steps, embed, hidden, np.float64))
    h = Tensor(rng.normal(size=(2, t_len, hidden)), requires_grad=True)
    x = Tensor(rng.normal(size=(2, t_len, embed)))
    cfg = auxloss.CpcConfig(steps, 1.0)
    inputs = {n: params[n] for n in params.keys()}
    inputs["h"] = h
    return dc.grad_check(lambda: auxloss.cpc_loss(h, x, params, cfg), inputs, h=STEP, tol=TOLERANCE)


def rec(seed: int = 0, t_len: int = 5) -> dc.GradCheckReport:
    rng = np.random.default_rng(seed)
    hidden, embed, actions, obs_size = 5, 4, 3, 6
    params = ParameterSet(auxloss.init_rec_params(rng, hidden, embed, actions, obs_size, np.float64))
    h = Tensor(rng.normal(size=(2, t_len, hidden)), requires_grad=True)
    prev_r = rng.normal(size=(2, t_len))
    prev_a = rng.integers(-1, actions, size=(2, t_len))
    obs = rng.uniform(size=(2, t_len, obs_size))
    inputs = {n: params[n] for n in params.keys()}
    inputs["h"] = h
    return dc.grad_check(lambda: auxloss.rec_loss(h, prev_r, prev_a, obs, params, auxloss.RecConfig(), actions),
                         inputs, h=STEP, tol=TOLERANCE)


def rl(seed: int = 0, t_len: int = 4, num_actions: int = 3) -> dc.GradCheckReport:
    rng = np.random.default_rng(seed)
    logits = Tensor(rng.normal(size=(t_len, num_actions)), requires_grad=True)
    values = Tensor(rng.normal(size=(t_len,)), requires_grad=True)
    actions = rng.integers(0, num_actions, size=t_len)
    vs, adv = rng.normal(size=t_len), rng.normal(size=t_len)
    return dc.grad_check(lambda: learner.rl_loss(actions, logits, values, (vs, adv)),
                         {"logits": logits, "values": values}, h=STEP, tol=TOLERANCE)


CHECKS = {"lstm_mem_step": lstm_mem_step, "cpc": cpc, "rec": rec, "rl_loss": rl}


def run_all(seed: int = 0) -> dict[str, dc.GradCheckReport]:
    return {name: fn(seed) for name, fn in CHECKS.items()}
