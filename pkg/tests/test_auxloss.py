import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memrecall import auxloss as ax
from memrecall import diffcore as dc
from memrecall.diffcore import ContractError, NumericError, ParameterSet, Tensor


def cpc_params(rng, steps, e, h):
    return ParameterSet(ax.init_cpc_params(rng, steps, e, h, np.float64))


def brute_cpc(h, x, ws, steps, weight):
    """Enumerate every (t, k, candidate) with plain loops."""
    nt = h.shape[0]
    losses = []
    for k in range(1, steps + 1):
        for t in range(nt - k):
            cands = [x[j] for j in range(k, nt)]
            logits = np.array([c @ ws[k - 1] @ h[t] for c in cands])
            pos = t  # x_{t+k} sits at position t in the candidate list
            m = logits.max()
            losses.append(-(logits[pos] - m - np.log(np.exp(logits - m).sum())))
    return weight * float(np.mean(losses))


def brute_rec(h, r, a, obs, p, cfg, n_act):
    total = 0.0
    for t in range(h.shape[0]):
        r_hat = p["rec/reward_w"] @ h[t] + p["rec/reward_b"]
        total += cfg.c_reward * 0.5 * float((r_hat[0] - r[t]) ** 2)
        target = np.zeros(n_act)
        if a[t] >= 0:
            target[a[t]] = 1.0
        a_hat = p["rec/action_w"] @ h[t] + p["rec/action_b"]
        total += cfg.c_action * 0.5 * float(np.sum((a_hat - target) ** 2))
        z = np.maximum(p["rec/image_l1_w"] @ h[t] + p["rec/image_l1_b"], 0)
        y = p["rec/image_l2_w"] @ z + p["rec/image_l2_b"]
        s = 1 / (1 + np.exp(-y))
        total += cfg.c_image * float(-np.sum(obs[t] * np.log(s) + (1 - obs[t]) * np.log(1 - s)))
    return total


# cpc_score


def test_cpc_score_examples():
    assert float(ax.cpc_score(Tensor([3.0, -1.0]), Tensor([2.0, 5.0]), Tensor(np.zeros((2, 2)))).data) == 1.0
    s = ax.cpc_score(Tensor([1.0, 0.0]), Tensor([1.0, 0.0]), Tensor(np.eye(2)))
    assert float(s.data) == pytest.approx(np.e, abs=1e-12)
    rng = np.random.default_rng(0)
    x, h, w = rng.normal(size=3), rng.normal(size=4), rng.normal(size=(3, 4))
    assert float(ax.cpc_score(Tensor(x), Tensor(h), Tensor(w)).data) == pytest.approx(np.exp(x @ w @ h), rel=1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cpc_score_overflow_raises():
    with pytest.raises(NumericError):
        ax.cpc_score(Tensor([1000.0]), Tensor([1000.0]), Tensor(np.ones((1, 1))))


# cpc_loss


def test_cpc_uniform_scores_give_log_n():
    rng = np.random.default_rng(1)
    t_len, steps = 6, 3
    params = ParameterSet({f"cpc/w{k}": np.zeros((2, 3)) for k in range(1, steps + 1)})
    h, x = Tensor(rng.normal(size=(t_len, 3))), Tensor(rng.normal(size=(t_len, 2)))
    expect = np.mean([np.log(t_len - k) for k in range(1, steps + 1) for _ in range(t_len - k)])
    assert float(ax.cpc_loss(h, x, params, ax.CpcConfig(steps, 1.0)).data) == pytest.approx(expect, abs=1e-12)


def test_cpc_single_candidate_is_zero():
    params = cpc_params(np.random.default_rng(0), 1, 2, 3)
    rng = np.random.default_rng(2)
    loss = ax.cpc_loss(Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=(2, 2))), params, ax.CpcConfig(1))
    assert float(loss.data) == 0.0


def test_cpc_rejects_short_unroll():
    params = cpc_params(np.random.default_rng(0), 1, 2, 3)
    with pytest.raises(ContractError):
        ax.cpc_loss(Tensor(np.zeros((1, 3))), Tensor(np.zeros((1, 2))), params, ax.CpcConfig(1))
    with pytest.raises(ContractError):
        ax.cpc_loss(Tensor(np.zeros((3, 3))), Tensor(np.zeros((3, 2))), params, ax.CpcConfig(3))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), t_len=st.integers(2, 6), steps=st.integers(1, 3),
       weight=st.sampled_from([1.0, 0.1, 2.5]))
def test_cpc_matches_brute_force(seed, t_len, steps, weight):
    steps = min(steps, t_len - 1)
    rng = np.random.default_rng(seed)
    params = cpc_params(rng, steps, 3, 4)
    h, x = rng.normal(size=(t_len, 4)), rng.normal(size=(t_len, 3))
    got = float(ax.cpc_loss(Tensor(h), Tensor(x), params, ax.CpcConfig(steps, weight)).data)
    want = brute_cpc(h, x, [params[f"cpc/w{k}"].data for k in range(1, steps + 1)], steps, weight)
    assert got == pytest.approx(want, abs=1e-10)
    assert got >= 0


def test_cpc_batched_is_mean_of_rows():
    rng = np.random.default_rng(3)
    params = cpc_params(rng, 2, 3, 4)
    h, x = rng.normal(size=(3, 5, 4)), rng.normal(size=(3, 5, 3))
    got = float(ax.cpc_loss(Tensor(h), Tensor(x), params, ax.CpcConfig(2)).data)
    ws = [params["cpc/w1"].data, params["cpc/w2"].data]
    assert got == pytest.approx(np.mean([brute_cpc(h[b], x[b], ws, 2, 1.0) for b in range(3)]), abs=1e-10)


def test_cpc_dominant_positive_approaches_zero():
    # a projection that scores the positive 50 higher than every negative
    t_len = 4
    x = np.eye(t_len)[:, :t_len] * 50.0
    h = np.eye(t_len)
    params = ParameterSet({"cpc/w1": np.roll(np.eye(t_len), 1, axis=0)})
    loss = ax.cpc_loss(Tensor(h), Tensor(x), params, ax.CpcConfig(1))
    assert float(loss.data) < 1e-20


def test_cpc_targets_are_constants():
    rng = np.random.default_rng(4)
    params = cpc_params(rng, 2, 3, 4)
    h = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
    x = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    gh, gx = dc.grad(ax.cpc_loss(h, x, params, ax.CpcConfig(2)), [h, x])
    np.testing.assert_array_equal(gx, 0.0)
    assert np.abs(gh).sum() > 0


# rec_loss


def rec_params(seed=0, hid=4, emb=3, act=3, obs=5):
    return ParameterSet(ax.init_rec_params(np.random.default_rng(seed), hid, emb, act, obs, np.float64))


def test_rec_zero_decoder_reward_term():
    p = rec_params()
    for n in p.keys():
        p[n].data[:] = 0.0
    cfg = ax.RecConfig(c_image=0.0, c_action=0.0, c_reward=1.0)
    loss = ax.rec_loss(Tensor(np.ones((1, 4))), [2.0], [-1], np.zeros((1, 5)), p, cfg, 3)
    assert float(loss.data) == 2.0


def test_rec_perfect_prediction_floor():
    p = rec_params()
    hid = np.array([[1.0, 0, 0, 0]])
    p["rec/reward_w"].data[:] = [[0.7, 0, 0, 0]]
    p["rec/reward_b"].data[:] = 0.0
    p["rec/action_w"].data[:] = 0.0
    p["rec/action_b"].data[:] = [0.0, 1.0, 0.0]
    obs = np.array([[0.0, 1.0, 0.5, 1.0, 0.0]])
    # decoder whose sigmoid output equals the target exactly where defined
    p["rec/image_l1_w"].data[:] = 0.0
    p["rec/image_l1_b"].data[:] = 0.0
    p["rec/image_l2_w"].data[:] = 0.0
    p["rec/image_l2_b"].data[:] = [-60.0, 60.0, 0.0, 60.0, -60.0]
    loss = float(ax.rec_loss(Tensor(hid), [0.7], [1], obs, p, ax.RecConfig(), 3).data)
    entropy_floor = np.log(2)  # only the 0.5 pixel has nonzero binary entropy
    assert loss == pytest.approx(entropy_floor, abs=1e-12)


def test_rec_rejects_unscaled_observations():
    with pytest.raises(ContractError):
        ax.rec_loss(Tensor(np.ones((1, 4))), [0.0], [0], np.full((1, 5), 2.0), rec_params(), ax.RecConfig(), 3)
    with pytest.raises(ContractError):
        ax.RecConfig(c_image=-1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), t_len=st.integers(1, 6))
def test_rec_matches_brute_force(seed, t_len):
    rng = np.random.default_rng(seed)
    p = rec_params(seed)
    cfg = ax.RecConfig(*rng.uniform(0, 2, size=3))
    h = rng.normal(size=(t_len, 4))
    r, a, obs = rng.normal(size=t_len), rng.integers(-1, 3, size=t_len), rng.uniform(size=(t_len, 5))
    got = float(ax.rec_loss(Tensor(h), r, a, obs, p, cfg, 3).data)
    want = brute_rec(h, r, a, obs, {n: p[n].data for n in p.keys()}, cfg, 3)
    assert got == pytest.approx(want, abs=1e-10)


def test_rec_gradient_reaches_decoder_and_core():
    rng = np.random.default_rng(7)
    p = rec_params(7)
    h = Tensor(rng.normal(size=(2, 4, 4)), requires_grad=True)
    r, a, obs = rng.normal(size=(2, 4)), rng.integers(0, 3, size=(2, 4)), rng.uniform(size=(2, 4, 5))
    inputs = {n: p[n] for n in p.keys()}
    inputs["h"] = h
    rep = dc.grad_check(lambda: ax.rec_loss(h, r, a, obs, p, ax.RecConfig(), 3), inputs, h=1e-5)
    assert rep.max_error < 1e-4
    assert np.abs(rep.analytic["h"]).sum() > 0
