"""Dense network forward/backward, Adam, finite-difference checking, checkpoints."""

import numpy as np
import pytest

from windbess.nn import Adam, Mlp, grad_check, load_nets, save_nets


def _net(sizes=(3, 5, 2), activation="identity", seed=0):
    return Mlp(sizes, activation, np.random.default_rng(seed))


def test_forward_shapes_and_batching():
    net = _net()
    single = net.forward(np.zeros((1, 3)))
    batch = net.forward(np.zeros((7, 3)))
    assert single.shape == (1, 2)
    assert batch.shape == (7, 2)
    assert np.allclose(batch, np.repeat(single, 7, axis=0))


def test_init_respects_fan_in_bounds():
    net = _net((9, 4, 4))
    assert np.abs(net.weights[0]).max() <= 1.0 / 3.0
    assert np.abs(net.biases[0]).max() <= 1.0 / 3.0
    assert np.abs(net.weights[1]).max() <= 0.5


def test_tanh_head_bounds_output():
    net = _net((3, 8, 4), "tanh", seed=5)
    y = net.forward(np.random.default_rng(1).normal(size=(50, 3)) * 10)
    assert np.all(np.abs(y) <= 1.0)


def test_constructor_validation():
    with pytest.raises(ValueError):
        Mlp((4,))
    with pytest.raises(ValueError):
        Mlp((4, 0, 2))
    with pytest.raises(ValueError):
        Mlp((4, 2), "sigmoid")


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(6, 4))
    for activation in ("identity", "tanh"):
        net = _net((4, 7, 5, 3), activation, seed=3)
        y, cache = net.forward_cached(x)
        # Quadratic loss 0.5*sum(y^2) has upstream gradient y.
        grads, _ = net.backward(cache, y)
        flat = np.concatenate([g.ravel() for g in grads])

        def loss(n):
            out = n.forward(x)
            return float(0.5 * np.sum(out * out))

        assert grad_check(net, loss, flat) < 1e-6


def test_backward_input_gradient():
    rng = np.random.default_rng(4)
    net = _net((3, 6, 2), seed=7)
    x = rng.normal(size=(1, 3))
    y, cache = net.forward_cached(x)
    _, dx = net.backward(cache, np.ones_like(y))
    h = 1e-6
    for j in range(3):
        bumped = x.copy()
        bumped[0, j] += h
        num = (net.forward(bumped).sum() - net.forward(x).sum()) / h
        assert dx[0, j] == pytest.approx(num, rel=1e-4, abs=1e-6)


def test_grad_check_flags_a_corrupted_gradient():
    net = _net((3, 4, 1), seed=9)
    x = np.random.default_rng(0).normal(size=(5, 3))

    def loss(n):
        return float(n.forward(x).sum())

    y, cache = net.forward_cached(x)
    grads, _ = net.backward(cache, np.ones_like(y))
    flat = np.concatenate([g.ravel() for g in grads])
    assert grad_check(net, loss, flat) < 1e-6
    assert grad_check(net, loss, flat * 2.0) > 0.4


def test_flat_round_trip_and_copy_independence():
    net = _net()
    theta = net.get_flat()
    clone = net.copy()
    clone.weights[0][0, 0] += 1.0
    assert net.weights[0][0, 0] != clone.weights[0][0, 0]
    net.set_flat(np.zeros_like(theta))
    assert net.forward(np.ones((1, 3))).tolist() == [[0.0, 0.0]]
    net.set_flat(theta)
    assert np.array_equal(net.get_flat(), theta)
    with pytest.raises(ValueError):
        net.set_flat(theta[:-1])


def test_adam_first_step_is_signed_lr():
    net = _net((2, 2), seed=1)
    before = net.get_flat()
    opt = Adam(net, lr=1e-3)
    grads = [np.ones_like(arr) * s for (_, arr), s in zip(net.param_blocks(), (1.0, -2.0))]
    opt.step(grads)
    delta = net.get_flat() - before
    # The first Adam step moves every parameter by -lr*sign(g) up to eps rounding.
    expected = np.concatenate([-1e-3 * np.sign(g).ravel() for g in grads])
    assert np.allclose(delta, expected, atol=1e-9)
    assert opt.t == 1


def test_adam_rejects_nonfinite_gradients():
    net = _net((2, 2), seed=1)
    opt = Adam(net, lr=1e-3)
    grads = [np.zeros_like(arr) for _, arr in net.param_blocks()]
    grads[0][0, 0] = np.nan
    with pytest.raises(FloatingPointError, match="layer0.W"):
        opt.step(grads)


def test_checkpoint_round_trip(tmp_path):
    nets = {"actor": _net((3, 4, 2), "tanh", seed=11), "q1": _net((5, 4, 1), seed=12)}
    extra = {"steps": np.array([123])}
    path = tmp_path / "ckpt.npz"
    save_nets(str(path), nets, {"note": "unit"}, extra)
    loaded, meta, arrays = load_nets(str(path))
    assert meta["note"] == "unit"
    assert arrays["steps"].tolist() == [123]
    for name, net in nets.items():
        assert loaded[name].sizes == net.sizes
        assert loaded[name].output_activation == net.output_activation
        assert np.array_equal(loaded[name].get_flat(), net.get_flat())
