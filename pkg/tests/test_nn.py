import numpy as np
import pytest

from airspace_ddpg.airspace import MAX_ACCEL
from airspace_ddpg.nn import (LINEAR, TANH_SCALED, Adam, CheckpointError, GradientSet, Mlp,
                              apply_gradients, backward, dump_mlp, forward, init_random,
                              parse_mlp, soft_update)


def numeric_grads(net, x, g_out, h=1e-5):
    """Central differences of sum(forward(x) * g_out) w.r.t. every parameter and x."""
    def f():
        return float(np.sum(forward(net, x)[0] * g_out))
    grads = []
    for p in net.params:
        gp = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = f()
            p[idx] = old - h
            down = f()
            p[idx] = old
            gp[idx] = (up - down) / (2 * h)
        grads.append(gp)
    gx = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        gx[idx] = (up - down) / (2 * h)
    return grads, gx


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-6, np.abs(a) + np.abs(b)))


@pytest.mark.parametrize("act", [LINEAR, TANH_SCALED])
def test_gradients_match_finite_differences(act):
    rng = np.random.default_rng(1)
    net = init_random([3, 8, 8, 2], rng, act)
    for b in net.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)
    x = rng.normal(size=(4, 3))
    g = rng.normal(size=(4, 2))
    _, cache = forward(net, x)
    an = backward(net, cache, g)
    num, gx = numeric_grads(net, x, g)
    for a, n in zip(an.params, num):
        assert rel_err(a, n) < 1e-4
    assert rel_err(an.input_gradient, gx) < 1e-4


def test_init_reproducible_and_bounded():
    a = init_random([2, 300, 400, 1], np.random.default_rng(5))
    b = init_random([2, 300, 400, 1], np.random.default_rng(5))
    for p, q in zip(a.params, b.params):
        assert np.array_equal(p, q)
    for w in a.weights:
        assert np.all(np.abs(w) <= 1 / np.sqrt(w.shape[0]))
    assert all(not b.any() for b in a.biases)


def test_init_rejects_bad_sizes():
    with pytest.raises(ValueError):
        init_random([3, 0, 2], np.random.default_rng(0))
    with pytest.raises(ValueError):
        init_random([3], np.random.default_rng(0))


def test_zero_net_outputs_zero():
    net = init_random([4, 5, 3], np.random.default_rng(0))
    for p in net.params:
        p[...] = 0
    assert not forward(net, np.ones(4))[0].any()


def test_one_by_one_affine():
    net = Mlp([1, 1], [np.array([[2.5]])], [np.array([-1.0])])
    assert forward(net, np.array([3.0]))[0][0] == pytest.approx(6.5)


def test_forward_dimension_mismatch():
    net = init_random([4, 5, 3], np.random.default_rng(0))
    with pytest.raises(ValueError):
        forward(net, np.ones(3))


def test_tanh_scaled_output_in_box():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        net = init_random([6, 16, 2], rng, TANH_SCALED)
        net.weights[-1] *= rng.uniform(1, 50)
        y = forward(net, rng.normal(scale=10, size=6))[0]
        assert np.all(np.abs(y) <= MAX_ACCEL)


def test_zero_output_gradient_gives_zero_grads():
    net = init_random([3, 8, 2], np.random.default_rng(0))
    _, cache = forward(net, np.ones((2, 3)))
    g = backward(net, cache, np.zeros((2, 2)))
    assert all(not p.any() for p in g.params)
    assert not g.input_gradient.any()


def test_linear_input_gradient_is_weight_transpose():
    net = init_random([3, 2], np.random.default_rng(0))
    go = np.array([0.5, -2.0])
    _, cache = forward(net, np.ones(3))
    g = backward(net, cache, go)
    np.testing.assert_allclose(g.input_gradient[0], net.weights[0] @ go, atol=1e-15)


def test_backward_rejects_stale_cache():
    net = init_random([3, 4, 2], np.random.default_rng(0))
    _, cache = forward(net, np.ones((5, 3)))
    with pytest.raises(ValueError):
        backward(net, cache, np.ones((4, 2)))


def scalar_net(value):
    return Mlp([1, 1], [np.array([[value]])], [np.array([0.0])])


def grads_of(value):
    return GradientSet([np.array([[value]])], [np.array([0.0])])


def test_apply_gradients_examples():
    net = apply_gradients(scalar_net(1.0), grads_of(2.0), 0.1)
    assert net.weights[0][0, 0] == pytest.approx(0.8, abs=1e-15)
    net = apply_gradients(scalar_net(1.0), grads_of(2.0), 0.0)
    assert net.weights[0][0, 0] == 1.0


def test_apply_gradients_linearity():
    a = apply_gradients(apply_gradients(scalar_net(1.0), grads_of(2.0), 0.1), grads_of(3.0), 0.1)
    b = apply_gradients(scalar_net(1.0), grads_of(5.0), 0.1)
    assert a.weights[0][0, 0] == pytest.approx(b.weights[0][0, 0], abs=1e-15)


def test_apply_gradients_rejects_nan():
    with pytest.raises(FloatingPointError):
        apply_gradients(scalar_net(1.0), grads_of(np.nan), 0.1)


def test_soft_update_examples():
    src = init_random([3, 4, 2], np.random.default_rng(0))
    tgt = init_random([3, 4, 2], np.random.default_rng(1))
    before = tgt.copy()
    soft_update(tgt, src, 0.0)
    assert all(np.array_equal(p, q) for p, q in zip(tgt.params, before.params))
    soft_update(tgt, src, 1.0)
    assert all(np.array_equal(p, q) for p, q in zip(tgt.params, src.params))
    x = np.random.default_rng(3).normal(size=(10, 3))
    assert np.array_equal(forward(tgt, x)[0], forward(src, x)[0])
    half = soft_update(scalar_net(0.0), scalar_net(2.0), 0.5)
    assert half.weights[0][0, 0] == 1.0


def test_soft_update_contracts_gap():
    rng = np.random.default_rng(4)
    src = init_random([3, 5, 2], rng)
    tgt = init_random([3, 5, 2], rng)
    gaps = [t - s for t, s in zip(tgt.params, src.params)]
    soft_update(tgt, src, 0.3)
    for gap, t, s in zip(gaps, tgt.params, src.params):
        np.testing.assert_allclose(t - s, 0.7 * gap, atol=1e-15)


def test_soft_update_architecture_mismatch():
    with pytest.raises(ValueError):
        soft_update(init_random([3, 4, 2], np.random.default_rng(0)),
                    init_random([3, 5, 2], np.random.default_rng(0)), 0.5)


def test_adam_descends_quadratic():
    net = scalar_net(5.0)
    opt = Adam(net, 0.1)
    for _ in range(500):
        w = net.weights[0][0, 0]
        opt.step(net, grads_of(2 * w))
    assert abs(net.weights[0][0, 0]) < 0.05


def test_parameter_block_round_trip():
    net = init_random([6, 16, 16, 2], np.random.default_rng(9), TANH_SCALED)
    blob = dump_mlp(net)
    back, end = parse_mlp(blob)
    assert end == len(blob)
    assert dump_mlp(back) == blob
    assert back.output_activation == TANH_SCALED


def test_parameter_block_rejections():
    blob = dump_mlp(init_random([3, 4, 2], np.random.default_rng(0)))
    with pytest.raises(CheckpointError, match="truncated"):
        parse_mlp(blob[:-3])
    with pytest.raises(CheckpointError, match="shape mismatch"):
        parse_mlp(blob, expect_sizes=[3, 5, 2])
    bad = bytearray(blob)
    bad[5] = 9
    with pytest.raises(CheckpointError, match="version"):
        parse_mlp(bytes(bad))
    with pytest.raises(CheckpointError, match="magic"):
        parse_mlp(b"XXXXX" + blob[5:])
