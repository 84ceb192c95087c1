import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memrecall import kernels
from memrecall.kernels import python_backend as py

compiled = kernels.compiled_backend
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def test_backend_name_matches_active_module():
    assert kernels.BACKEND == ("cython" if compiled is not None else "python")


def brute_knn(dist2, write_step, valid, k):
    nb = dist2.shape[0]
    idx = np.full((nb, k), -1)
    for b in range(nb):
        cand = [(dist2[b, j], write_step[b, j], j) for j in range(dist2.shape[1]) if valid[b, j]]
        cand.sort()
        for i, (_, _, j) in enumerate(cand[:k]):
            idx[b, i] = j
    return idx


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), nb=st.integers(1, 3), nc=st.integers(1, 20), k=st.integers(1, 12))
def test_knn_select_matches_linear_scan(seed, nb, nc, k):
    rng = np.random.default_rng(seed)
    # coarse distances force ties so the write_step tie-break is exercised
    dist2 = rng.integers(0, 4, size=(nb, nc)).astype(np.float64)
    write_step = rng.permutation(nb * nc).reshape(nb, nc).astype(np.int64)
    valid = rng.random((nb, nc)) < 0.8
    idx, count = kernels.knn_select(dist2, write_step, valid, k)
    np.testing.assert_array_equal(idx, brute_knn(dist2, write_step, valid, k))
    np.testing.assert_array_equal(count, np.minimum(valid.sum(axis=1), k))


@needs_compiled
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), t=st.integers(1, 30), n=st.integers(1, 40))
def test_backends_agree(seed, t, n):
    rng = np.random.default_rng(seed)
    d, g, c = rng.normal(size=(t, 3)), rng.uniform(size=(t, 3)), rng.uniform(size=(t, 3))
    np.testing.assert_array_equal(compiled.vtrace_scan(d, g, c), py.vtrace_scan(d, g, c))
    x = rng.normal(size=n)
    a = float(rng.uniform(0.01, 1.0))
    np.testing.assert_array_equal(compiled.ewma(x, a), py.ewma(x, a))
    w = int(rng.integers(1, 12))
    np.testing.assert_allclose(compiled.rolling_mean(x, w), py.rolling_mean(x, w), rtol=0, atol=1e-12)
    dist2 = rng.integers(0, 5, size=(2, n)).astype(np.float64)
    ws = rng.permutation(2 * n).reshape(2, n).astype(np.int64)
    valid = rng.random((2, n)) < 0.7
    for a_, b_ in zip(compiled.knn_select(dist2, ws, valid, 5), py.knn_select(dist2, ws, valid, 5)):
        np.testing.assert_array_equal(a_, b_)
    nxt = rng.integers(0, n, size=(n, 3))
    goal = rng.random(n) < 0.2
    np.testing.assert_array_equal(compiled.distance_field(nxt, goal), py.distance_field(nxt, goal))


def test_vtrace_scan_recursion():
    d = np.array([[1.0], [2.0], [3.0]])
    g = np.full((3, 1), 0.5)
    c = np.ones((3, 1))
    # acc_2 = 3, acc_1 = 2 + 0.5*3, acc_0 = 1 + 0.5*3.5
    np.testing.assert_allclose(kernels.vtrace_scan(d, g, c)[:, 0], [2.75, 3.5, 3.0])


def test_ewma_and_rolling_mean_examples():
    np.testing.assert_array_equal(kernels.ewma(np.array([0.0, 10.0]), 0.5), [0.0, 5.0])
    np.testing.assert_array_equal(kernels.rolling_mean(np.arange(5.0), 2), [0.5, 1.5, 2.5, 3.5])


def test_distance_field_against_bfs():
    # ring of 6 states, action 0 forward, action 1 stay
    nxt = np.array([[(s + 1) % 6, s] for s in range(6)])
    goal = np.zeros(6, dtype=bool)
    goal[4] = True
    np.testing.assert_array_equal(kernels.distance_field(nxt, goal), [4, 3, 2, 1, 0, 5])
