import numpy as np
import pytest

from memrecall import controller as ct
from memrecall import diffcore as dc
from memrecall import learner
from memrecall.diffcore import DimensionError, ParameterSet, Tensor
from memrecall.taskforge import FAMILIES, PSYCHLAB, Level, make_task
from memrecall.taskforge.base import ObsSpec

CFG = ct.ModelConfig(embed=6, hidden=5, key=4, neighbors=3, capacity=16, conv_channels=2, dtype="float64")
FLAT = ObsSpec("flat", 7)


def params_for(kind="lstm", mem=True, seed=0, spec=FLAT, actions=5):
    rng = np.random.default_rng(seed)
    p = ct.init_encoder(rng, spec, CFG)
    p.update(ct.init_core(rng, kind, CFG, mem))
    p.update(ct.init_heads(rng, CFG, actions))
    return ParameterSet(p)


def zeroed(params):
    return ParameterSet({n: np.zeros_like(params[n].data) for n in params.keys()})


def test_encode_zero_params_gives_zero_embedding():
    p = zeroed(params_for())
    np.testing.assert_array_equal(ct.encode(p, np.zeros(7), FLAT).data, np.zeros(6))


def test_encode_distinct_one_hots_distinct_embeddings():
    p = params_for(seed=3)
    xs = [ct.encode(p, np.eye(7)[i], FLAT).data for i in range(7)]
    for i in range(7):
        for j in range(i + 1, 7):
            assert not np.array_equal(xs[i], xs[j])


def test_encode_rejects_wrong_width():
    with pytest.raises(DimensionError):
        ct.encode(params_for(), np.zeros(6), FLAT)


def test_encode_gradient_matches_finite_differences():
    p = params_for(seed=1)
    obs = np.random.default_rng(2).uniform(size=7)
    enc = {n: p[n] for n in p.keys() if n.startswith("encoder/")}
    rep = dc.grad_check(lambda: dc.sum(dc.square(ct.encode(p, obs, FLAT))), enc, h=1e-5)
    assert rep.max_error < 1e-4


def test_grid_encoder_gradient_matches_finite_differences():
    spec = ObsSpec("grid", 5 * 5 * 2 + 3, (5, 5, 2), 3)
    p = params_for(spec=spec, seed=4)
    obs = np.random.default_rng(0).uniform(size=spec.size)
    enc = {n: p[n] for n in p.keys() if n.startswith("encoder/")}
    rep = dc.grad_check(lambda: dc.sum(dc.square(ct.encode(p, obs, spec))), enc, h=1e-5)
    assert rep.max_error < 1e-4


def test_lstm_zero_params_zero_state():
    p = zeroed(params_for())
    state = ct.lstm_step(p, Tensor(np.ones((1, 6))), Tensor(np.ones((1, 5))), ct.LSTMState.zeros(1, 5, np.float64))
    np.testing.assert_array_equal(state.h.data, 0.0)
    np.testing.assert_array_equal(state.c.data, 0.0)


def test_lstm_saturated_forget_gate_keeps_cell():
    p = zeroed(params_for())
    p["core/lstm_b"].data[5:10] = 50.0
    v = np.array([[0.3, -1.2, 2.0, 0.0, 5.0]])
    prev = ct.LSTMState(Tensor(np.zeros((1, 5))), Tensor(v))
    out = ct.lstm_step(p, Tensor(np.ones((1, 6))), Tensor(np.ones((1, 5))), prev)
    np.testing.assert_allclose(out.c.data, v, atol=1e-9, rtol=0)


def test_lstm_gradient_matches_finite_differences():
    p = params_for(seed=5)
    rng = np.random.default_rng(5)
    x, m = Tensor(rng.normal(size=(2, 6))), Tensor(rng.normal(size=(2, 5)))
    prev = ct.LSTMState(Tensor(rng.normal(size=(2, 5))), Tensor(rng.normal(size=(2, 5))))
    core = {n: p[n] for n in p.keys() if n.startswith("core/")}
    rep = dc.grad_check(lambda: dc.sum(ct.lstm_step(p, x, m, prev).h), core, h=1e-5)
    assert rep.max_error < 1e-4


def test_lstm_width_mismatch():
    p = params_for()
    with pytest.raises(DimensionError):
        ct.lstm_step(p, Tensor(np.ones(6)), None, ct.LSTMState.zeros(1, 5, np.float64))


def test_init_forget_bias_and_uniform_bounds():
    p = params_for(seed=7)
    np.testing.assert_array_equal(p["core/lstm_b"].data[5:10], 1.0)
    w = p["core/lstm_w"].data
    assert np.abs(w).max() <= 1 / np.sqrt(w.shape[1])


def test_ff_zero_params_and_width():
    p = zeroed(params_for("ff", mem=True))
    np.testing.assert_array_equal(ct.ff_step(p, Tensor(np.ones(6)), Tensor(np.ones(5))).data, 0.0)
    p2 = params_for("ff", mem=False)
    assert ct.ff_step(p2, Tensor(np.ones(6)), None).shape == (5,)
    assert p2["core/ff1_w"].shape[1] == CFG.embed


def test_ff_gradient_matches_finite_differences():
    p = params_for("ff", seed=6)
    rng = np.random.default_rng(6)
    x, m = Tensor(rng.normal(size=(3, 6))), Tensor(rng.normal(size=(3, 5)))
    core = {n: p[n] for n in p.keys() if n.startswith("core/")}
    rep = dc.grad_check(lambda: dc.sum(ct.ff_step(p, x, m)), core, h=1e-5)
    assert rep.max_error < 1e-4


def test_heads_zero_params_uniform_policy():
    p = zeroed(params_for())
    logits, value = ct.heads(p, Tensor(np.ones(5)))
    np.testing.assert_array_equal(logits.data, 0.0)
    assert float(value.data) == 0.0
    prob = np.exp(logits.data) / np.exp(logits.data).sum()
    assert -(prob * np.log(prob)).sum() == pytest.approx(np.log(5), abs=1e-12)
    assert np.log(5) == pytest.approx(1.609438, abs=1e-6)


def test_action_set_sizes_per_family():
    sizes = {f: make_task(f, Level.TRAIN_SMALL, 0).num_actions for f in FAMILIES}
    for f, n in sizes.items():
        assert n == (5 if f in PSYCHLAB else 8), (f, n)


def test_state_reset_is_exact_zero():
    rng = np.random.default_rng(0)
    s = ct.LSTMState(Tensor(rng.normal(size=(3, 5))), Tensor(rng.normal(size=(3, 5))))
    r = s.reset(np.array([True, False, True]))
    np.testing.assert_array_equal(r.h.data[[0, 2]], 0.0)
    np.testing.assert_array_equal(r.c.data[[0, 2]], 0.0)
    np.testing.assert_array_equal(r.h.data[1], s.h.data[1])


def test_step_is_deterministic():
    agent = learner.Agent({"controller": "lstm", "mem": True, "aux": "none"}, FLAT, 4, CFG)
    params = agent.init_params(0)
    outs = []
    for _ in range(2):
        buf = agent.new_buffer(1)
        state = agent.initial_state(1)
        for t in range(4):
            o = agent.step(params, np.full((1, 7), 0.1 * t), state, buf)
            state = o.state
        outs.append((o.logits.data.tobytes(), o.value.data.tobytes()))
    assert outs[0] == outs[1]


def test_query_receives_gradient_through_read():
    agent = learner.Agent({"controller": "lstm", "mem": True, "aux": "none"}, FLAT, 4, CFG)
    params = agent.init_params(1)
    buf = agent.new_buffer(1)
    state = agent.initial_state(1)
    rng = np.random.default_rng(1)
    with dc.no_grad():
        for _ in range(3):
            state = agent.step(params, rng.uniform(size=(1, 7)), state, buf).state
    out = agent.step(params, rng.uniform(size=(1, 7)), state, buf)
    g = dc.backward(dc.sum(out.value) + dc.sum(out.logits), params)
    assert np.abs(g["mem/query_w"]).sum() > 0
    assert np.abs(g["mem/query_b"]).sum() > 0


def test_mem_disabled_omits_memory_input():
    agent = learner.Agent({"controller": "lstm", "mem": False, "aux": "none"}, FLAT, 4, CFG)
    params = agent.init_params(0)
    assert params["core/lstm_w"].shape[1] == CFG.embed + CFG.hidden
    assert not any(n.startswith("mem/") for n in params.keys())
    assert agent.new_buffer(1) is None
