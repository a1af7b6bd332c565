import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rltrader.errors import DomainError, ShapeError, UsageError
from rltrader.gradcheck import check_one, random_params
from rltrader.qnet import (
    AdamState, NetDims, NetworkParams, QNetwork, adam_step, backward, forward, forward_cached,
    init_params, load_params, save_params, soft_update,
)

TINY = NetDims(n_features=2, lstm1=1, lstm2=1, pos_in=3, pos_hidden=1, merge1=1, merge2=1, n_actions=3)
SMALL = NetDims(n_features=9, lstm1=5, lstm2=3, pos_in=3, pos_hidden=3, merge1=4, merge2=4)


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def scalar_forward(P, market, pos):
    """Hand-unrolled forward pass for hidden sizes of one, in plain floats."""
    def cell(xs, W, U, b):
        h = c = 0.0
        out = []
        for x in xs:
            z = [sum(W[k][j] * x[j] for j in range(len(x))) + U[k][0] * h + b[k] for k in range(4)]
            i, f, g, o = sig(z[0]), sig(z[1]), math.tanh(z[2]), sig(z[3])
            c = f * c + i * g
            h = o * math.tanh(c)
            out.append([h])
        return out

    L = {k: v.tolist() for k, v in P.items()}
    h1 = cell(market, L["lstm1.W"], L["lstm1.U"], L["lstm1.b"])
    h2 = cell(h1, L["lstm2.W"], L["lstm2.U"], L["lstm2.b"])[-1][0]
    ph = max(0.0, sum(L["pos.W"][0][j] * pos[j] for j in range(3)) + L["pos.b"][0])
    m1 = max(0.0, L["merge1.W"][0][0] * h2 + L["merge1.W"][0][1] * ph + L["merge1.b"][0])
    m2 = max(0.0, L["merge2.W"][0][0] * m1 + L["merge2.b"][0])
    return [L["head.W"][a][0] * m2 + L["head.b"][a] for a in range(3)]


def test_zero_weights():
    z = NetworkParams.zeros()
    m = np.full((30, 9), 0.5)
    assert np.array_equal(forward(z, m, np.zeros(3)), np.zeros(3))
    np.testing.assert_allclose(forward(z, m, np.zeros(3), head="softmax"), [1 / 3] * 3, atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    P = NetworkParams({k: rng.uniform(0.2, 1.0, size=s) for k, s in TINY.shapes().items()}, TINY)
    market = rng.uniform(0.1, 1, size=(4, 2))
    pos = rng.uniform(0, 1, size=3)
    np.testing.assert_allclose(forward(P, market, pos), scalar_forward(P, market.tolist(), pos.tolist()),
                               rtol=0, atol=1e-12)


def fd_gradient(params, market, pos, dq, head, h=1e-6):
    """Plain central differences over every scalar parameter."""
    out = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            plus, minus = params.copy(), params.copy()
            plus.arrays[name][idx] += h
            minus.arrays[name][idx] -= h
            g[idx] = (dq @ forward(plus, market, pos, head) - dq @ forward(minus, market, pos, head)) / (2 * h)
        out[name] = g
    return out


@pytest.mark.parametrize("head", ["linear", "softmax"])
@pytest.mark.parametrize("window", [1, 4])
def test_backward_matches_finite_differences(head, window):
    rng = np.random.default_rng(window)
    params = random_params(SMALL, rng)
    params.arrays["merge1.b"][:] = 0.3  # keep ReLUs active and away from kinks
    params.arrays["merge2.b"][:] = 0.3
    params.arrays["pos.b"][:] = 0.3
    market = rng.uniform(0.1, 1, size=(window, 9))
    pos = np.array([0.2, 0.0, 0.1])
    dq = rng.normal(size=3)
    _, cache = forward_cached(params, market, pos, head)
    g = backward(params, cache, dq)
    for name, num in fd_gradient(params, market, pos, dq, head).items():
        np.testing.assert_allclose(g[name], num, rtol=1e-5, atol=1e-8, err_msg=name)


def test_full_size_gradcheck():
    assert check_one(0, 3, NetDims()).max_rel_error <= 1e-4


def test_corrupted_gradient_is_detected():
    assert check_one(0, 3, SMALL, corrupt=True).max_rel_error > 1e-4


def test_backward_needs_forward():
    with pytest.raises(UsageError):
        backward(init_params(), None, np.ones(3))
    with pytest.raises(UsageError):
        QNetwork(init_params()).backward(np.ones(3))


def test_shape_errors():
    p = init_params()
    with pytest.raises(ShapeError):
        forward(p, np.zeros((30, 8)), np.zeros(3))
    with pytest.raises(ShapeError):
        forward(p, np.zeros((30, 9)), np.zeros(2))
    with pytest.raises(DomainError):
        forward(p, np.zeros((3, 9)), np.zeros(3), head="tanh")
    with pytest.raises(ShapeError):
        NetworkParams({"x": np.zeros(1)})


def test_qnetwork_wrapper_matches_functional():
    p = init_params(seed=4)
    m = np.random.default_rng(0).uniform(0.1, 1, (5, 9))
    net = QNetwork(p)
    q = net.forward(m, np.ones(3))
    assert np.array_equal(q, forward(p, m, np.ones(3)))
    assert np.array_equal(net.q_values(m, np.ones(3)), q)
    _, cache = forward_cached(p, m, np.ones(3))
    assert net.backward(np.array([1.0, 0, 0])) == backward(p, cache, np.array([1.0, 0, 0]))


def test_init_bounds_and_determinism():
    p = init_params(NetDims(), seed=7)
    for name, a in p.items():
        if name.endswith(".W") or name.endswith(".U"):
            assert np.all(np.abs(a) <= 1 / math.sqrt(a.shape[1]))
    b = p["lstm1.b"]
    assert np.all(b[32:64] == 1.0) and np.all(b[:32] == 0) and np.all(b[64:] == 0)
    assert np.all(p["head.b"] == 0)
    assert init_params(NetDims(), 7) == p
    assert init_params(NetDims(), 8) != p


def adam_oracle(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        out.append(theta)
    return out


def test_adam_first_step_and_sequence():
    dims = TINY
    p = NetworkParams.zeros(dims).map(lambda a: a + 1.0)
    st_ = AdamState.zeros_like(p)
    seq = [2.0, -1.0, 0.5, 3.0]
    expect = adam_oracle(1.0, seq, 0.1)
    assert expect[0] == pytest.approx(1.0 - 0.1, abs=1e-8)
    for k, g in enumerate(seq):
        p, st_ = adam_step(p, NetworkParams.zeros(dims).map(lambda a: a + g), st_, 0.1)
        assert st_.step_count == k + 1
        assert np.allclose(p.flat(), expect[k], rtol=0, atol=1e-14)


def test_adam_does_not_mutate_inputs():
    p = init_params(SMALL, 1)
    g = init_params(SMALL, 2)
    p0, st0 = p.copy(), AdamState.zeros_like(p)
    adam_step(p, g, st0, 0.01)
    assert p == p0 and st0.step_count == 0 and st0.first_moment == NetworkParams.zeros(SMALL)


def test_soft_update_cases():
    a, b = init_params(SMALL, 1), init_params(SMALL, 2)
    assert soft_update(a, b, 0.0) == a
    assert soft_update(a, b, 1.0) == b
    mid = soft_update(a, b, 0.5)
    assert np.allclose(mid.flat(), 0.5 * (a.flat() + b.flat()), atol=1e-15)
    with pytest.raises(DomainError):
        soft_update(a, b, 1.5)
    with pytest.raises(DomainError):
        soft_update(a, b, -0.1)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 0.9), st.integers(1, 60))
def test_soft_update_contracts_gap(tau, steps):
    online, target = init_params(SMALL, 1), init_params(SMALL, 2)
    gap0 = (target.flat() - online.flat())
    for _ in range(steps):
        target = soft_update(target, online, tau)
    gap = target.flat() - online.flat()
    np.testing.assert_allclose(gap, gap0 * (1 - tau) ** steps, rtol=1e-9, atol=1e-15)


@pytest.mark.parametrize("suffix", [".npz", ".json"])
def test_checkpoint_round_trip(tmp_path, suffix):
    p = init_params(SMALL, 3).map(lambda a: a * math.pi)
    path = tmp_path / f"ck{suffix}"
    save_params(path, p)
    back = load_params(path)
    assert back == p and back.dims == SMALL
    x = np.random.default_rng(0).uniform(size=(4, 9))
    assert np.array_equal(forward(back, x, np.ones(3)), forward(p, x, np.ones(3)))


def test_flat_round_trip():
    p = init_params(SMALL, 5)
    assert NetworkParams.from_flat(p.flat(), SMALL) == p
    with pytest.raises(ShapeError):
        NetworkParams.from_flat(np.zeros(3), SMALL)
