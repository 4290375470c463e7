"""Neural core tests: forward/backward oracles, finite differences, Adam."""

import numpy as np
import pytest

from stoprl.nets import AdamState, DimensionError, Mlp, adam_step


def make_net(dims, seed, output_activation="none"):
    return Mlp.create(dims, np.random.default_rng(seed), output_activation)


def shaped_grads(net, x, upstream):
    grads, _ = net.backward(x, upstream)
    return grads.weights + grads.biases


# ---------------------------------------------------------------- forward


def test_forward_identity_layer():
    net = Mlp.from_params([np.eye(2)], [np.zeros(2)], "none")
    out = net.forward(np.array([1.5, -2.0]))
    assert np.array_equal(out, np.array([1.5, -2.0]))


def test_forward_zero_net_is_zero():
    net = make_net([3, 5, 2], seed=0, output_activation="tanh")
    net.theta[...] = 0.0
    out = net.forward(np.array([0.3, -4.0, 2.2]))
    assert np.array_equal(out, np.zeros(2))


def test_forward_matches_straight_line_oracle():
    # independent oracle: explicit per-element matrix arithmetic, no numpy matmul
    net = make_net([2, 4, 1], seed=7)
    x = np.array([0.3, 0.7])

    w0, b0 = net.weights[0], net.biases[0]
    hidden = []
    for j in range(4):
        acc = b0[j]
        for i in range(2):
            acc += x[i] * w0[i, j]
        hidden.append(max(acc, 0.0))
    w1, b1 = net.weights[1], net.biases[1]
    expected = b1[0]
    for j in range(4):
        expected += hidden[j] * w1[j, 0]

    out = net.forward(x)
    assert out.shape == (1,)
    assert out[0] == pytest.approx(expected, rel=1e-12)


def test_forward_batch_equals_per_row():
    net = make_net([3, 8, 2], seed=1, output_activation="tanh")
    xs = np.random.default_rng(2).normal(size=(5, 3))
    batch = net.forward(xs)
    rows = np.stack([net.forward(x) for x in xs])
    # BLAS GEMM vs GEMV may round differently; equality only up to ulps
    assert np.allclose(batch, rows, rtol=1e-12, atol=1e-14)


def test_tanh_output_bounded():
    net = make_net([2, 6, 3], seed=3, output_activation="tanh")
    xs = np.random.default_rng(4).normal(scale=50.0, size=(100, 2))
    out = net.forward(xs)
    assert np.all(out >= -1.0) and np.all(out <= 1.0)


def test_forward_deterministic_for_seed():
    a = make_net([4, 16, 16, 2], seed=11)
    b = make_net([4, 16, 16, 2], seed=11)
    x = np.random.default_rng(5).normal(size=4)
    assert np.array_equal(a.forward(x), b.forward(x))


def test_forward_dimension_mismatch_raises():
    net = make_net([3, 4, 1], seed=0)
    with pytest.raises(DimensionError):
        net.forward(np.zeros(5))


def test_weight_views_share_flat_storage():
    net = make_net([2, 3, 1], seed=13)
    net.weights[0][0, 0] = 123.0
    assert net.theta[0] == 123.0
    assert net.weights[0].base is net.theta or net.weights[0].base is net.theta.base


# ---------------------------------------------------------------- backward


def test_backward_zero_upstream_gives_zero_grads():
    net = make_net([2, 4, 3], seed=9)
    grads, xg = net.backward(np.array([0.5, -0.5]), np.zeros(3))
    assert np.array_equal(grads.flat, np.zeros_like(grads.flat))
    assert np.array_equal(xg, np.zeros(2))


def test_backward_single_linear_layer_analytic():
    # y = Wx + b  =>  dW = x (outer) u, db = u, dx = W u
    rng = np.random.default_rng(12)
    w = rng.normal(size=(3, 2))
    net = Mlp.from_params([w], [rng.normal(size=2)], "none")
    x = rng.normal(size=3)
    u = rng.normal(size=2)
    grads, xg = net.backward(x, u)
    assert np.allclose(grads.weights[0], np.outer(x, u), atol=1e-15)
    assert np.allclose(grads.biases[0], u, atol=1e-15)
    assert np.allclose(xg, w @ u, atol=1e-15)


def central_difference_grads(net, x, upstream, step=1e-5):
    """Finite-difference oracle for d(upstream . output)/d(param)."""
    grads = []
    for p in net.weights + net.biases:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            plus = float(np.dot(upstream, net.forward(x)))
            flat[i] = orig - step
            minus = float(np.dot(upstream, net.forward(x)))
            flat[i] = orig
            gflat[i] = (plus - minus) / (2 * step)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric, rel=1e-4, abs_tol=1e-6):
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(n), abs_tol / rel)
        assert np.all(np.abs(a - n) <= rel * denom + abs_tol)


def test_backward_matches_finite_differences_2_4_1():
    net = make_net([2, 4, 1], seed=21)
    x = np.array([0.3, 0.7])
    u = np.array([1.0])
    analytic = shaped_grads(net, x, u)
    numeric = central_difference_grads(net, x, u)
    assert_grads_close(analytic, numeric)


def test_backward_gradient_check_random_small_nets():
    rng = np.random.default_rng(99)
    for trial in range(6):
        n_hidden = int(rng.integers(0, 3))
        dims = [int(rng.integers(1, 5))]
        dims += [int(rng.integers(2, 17)) for _ in range(n_hidden)]
        dims += [int(rng.integers(1, 4))]
        act = "tanh" if trial % 2 else "none"
        net = make_net(dims, seed=100 + trial, output_activation=act)
        x = rng.normal(size=dims[0])
        u = rng.normal(size=dims[-1])
        analytic = shaped_grads(net, x, u)
        numeric = central_difference_grads(net, x, u)
        assert_grads_close(analytic, numeric)


def test_backward_input_gradient_matches_finite_differences():
    net = make_net([3, 8, 2], seed=31, output_activation="tanh")
    x = np.random.default_rng(6).normal(size=3)
    u = np.array([0.7, -1.1])
    _, xg = net.backward(x, u)
    step = 1e-6
    numeric = np.zeros(3)
    for i in range(3):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        numeric[i] = (np.dot(u, net.forward(xp)) - np.dot(u, net.forward(xm))) / (2 * step)
    assert np.allclose(xg, numeric, rtol=1e-4, atol=1e-8)


def test_backward_batch_param_grads_sum_over_rows():
    net = make_net([2, 5, 2], seed=41)
    xs = np.random.default_rng(7).normal(size=(4, 2))
    us = np.random.default_rng(8).normal(size=(4, 2))
    grads, xg = net.backward(xs, us)
    total = np.zeros_like(grads.flat)
    for x, u in zip(xs, us):
        g_row, _ = net.backward(x, u)
        total += g_row.flat
    assert np.allclose(grads.flat, total, atol=1e-12)
    assert xg.shape == (4, 2)


def test_backward_upstream_shape_mismatch_raises():
    net = make_net([2, 3], seed=0)
    with pytest.raises(DimensionError):
        net.backward(np.zeros(2), np.zeros(5))


# ---------------------------------------------------------------- adam


def test_adam_zero_grad_is_fixed_point():
    net = make_net([2, 3], seed=55)
    before = net.theta.copy()
    state = AdamState.for_params(net.theta, learning_rate=1e-3)
    adam_step(net.theta, np.zeros_like(net.theta), state)
    assert np.array_equal(net.theta, before)
    assert np.array_equal(state.first_moment, np.zeros_like(net.theta))
    assert np.array_equal(state.second_moment, np.zeros_like(net.theta))
    assert state.step_count == 1


def test_adam_first_step_scalar():
    p = np.array([0.0])
    state = AdamState.for_params(p, learning_rate=1e-3)
    adam_step(p, np.array([1.0]), state)
    # bias correction makes m_hat = v_hat = 1 on the first step
    assert p[0] == pytest.approx(-1e-3, rel=1e-6)


def test_adam_five_step_trace_matches_manual_recurrence():
    # independent oracle: run the textbook recurrence with plain floats
    lr, b1, b2, eps = 1e-2, 0.9, 0.999, 1e-8
    g = 0.5
    theta, m, v = 0.2, 0.0, 0.0
    expected = []
    for t in range(1, 6):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        theta -= lr * m_hat / (np.sqrt(v_hat) + eps)
        expected.append(theta)

    p = np.array([0.2])
    state = AdamState.for_params(p, learning_rate=lr)
    got = []
    for _ in range(5):
        adam_step(p, np.array([g]), state)
        got.append(p[0])
    assert np.allclose(got, expected, rtol=1e-12)
    assert state.step_count == 5


def test_adam_rejects_nonfinite_gradient():
    p = np.array([1.0, 2.0])
    state = AdamState.for_params(p, learning_rate=1e-3)
    with pytest.raises(FloatingPointError):
        adam_step(p, np.array([1.0, np.nan]), state)
    assert np.array_equal(p, np.array([1.0, 2.0]))
    assert state.step_count == 0


def test_adam_shape_mismatch_raises():
    p = np.zeros(4)
    state = AdamState.for_params(p, learning_rate=1e-3)
    with pytest.raises(DimensionError):
        adam_step(p, np.zeros(3), state)


# ---------------------------------------------------------------- snapshots


def test_snapshot_round_trip():
    net = make_net([3, 7, 2], seed=77, output_activation="tanh")
    back = Mlp.from_dict(net.to_dict())
    x = np.random.default_rng(9).normal(size=3)
    assert np.array_equal(net.forward(x), back.forward(x))
    assert back.layer_dims == net.layer_dims


def test_snapshot_json_file_round_trip(tmp_path):
    net = make_net([2, 4, 1], seed=78)
    path = str(tmp_path / "net.json")
    net.save_json(path)
    back = Mlp.load_json(path)
    x = np.array([0.1, -0.2])
    assert np.array_equal(net.forward(x), back.forward(x))


def test_snapshot_rejects_bad_shapes():
    net = make_net([2, 4, 1], seed=79)
    blob = net.to_dict()
    blob["layer_dims"] = [2, 3, 1]
    with pytest.raises(DimensionError):
        Mlp.from_dict(blob)
