import math

import numpy as np
import pytest

from neuralfield import network
from neuralfield.errors import ConfigError
from neuralfield.network import MlpParams, backward, forward, init_xavier
from neuralfield.numerics import Rng, check_gradient


def zero_net(dims, activation):
    return MlpParams([np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
                     [np.zeros(b) for b in dims[1:]], activation)


def flat_params(p):
    return np.concatenate([a.ravel() for a in p.arrays])


def set_flat(p, flat):
    pos = 0
    for a in p.arrays:
        a[...] = flat[pos:pos + a.size].reshape(a.shape)
        pos += a.size


def test_xavier_bounds_and_zero_bias():
    p = init_xavier((16, 64, 64, 64, 3), Rng(1))
    bound = math.sqrt(6 / 80)
    assert np.all(np.abs(p.weights[0]) <= bound) and np.abs(p.weights[0]).max() > 0.9 * bound
    for b in p.biases:
        assert np.all(b == 0)
    assert p.weights[0].dtype == np.float32


def test_xavier_deterministic():
    a = init_xavier((4, 8, 2), Rng(99))
    b = init_xavier((4, 8, 2), Rng(99))
    for x, y in zip(a.arrays, b.arrays):
        assert x.tobytes() == y.tobytes()


def test_xavier_rejects_bad_dims():
    with pytest.raises(ConfigError):
        init_xavier((), Rng(1))
    with pytest.raises(ConfigError):
        init_xavier((5,), Rng(1))


def test_zero_net_outputs():
    out, _ = forward(zero_net([3, 4, 2], "sigmoid"), np.ones((5, 3)))
    assert np.all(out == 0.5)
    out, _ = forward(zero_net([3, 4, 2], "identity"), np.ones((5, 3)))
    assert np.all(out == 0.0)


def test_one_hidden_unit_by_hand():
    p = MlpParams([np.array([[2.0], [-1.0]]), np.array([[1.5]])], [np.array([-0.25]), np.array([0.1])],
                  "sigmoid")
    x = np.array([[0.3, 0.9], [0.1, 0.2]])
    out, _ = forward(p, x)
    for row, y in zip(x, out[:, 0]):
        z = 2 * row[0] - row[1] - 0.25
        h = z if z > 0 else 0.01 * z
        assert y == pytest.approx(1 / (1 + math.exp(-(1.5 * h + 0.1))), abs=1e-7)


def test_forward_shape_error():
    with pytest.raises(ConfigError):
        forward(zero_net([3, 2], "identity"), np.ones((4, 5)))


def test_backward_zero_upstream():
    p = init_xavier((3, 5, 2), Rng(2), dtype=np.float64)
    out, cache = forward(p, np.ones((4, 3)))
    g = backward(p, cache, np.zeros_like(out))
    assert all(np.all(a == 0) for a in g.arrays) and np.all(g.inputs == 0)


def test_single_linear_layer_closed_form(np_rng):
    p = MlpParams([np_rng.standard_normal((3, 2))], [np.zeros(2)], "identity")
    x = np_rng.standard_normal((6, 3))
    up = np_rng.standard_normal((6, 2))
    _, cache = forward(p, x)
    g = backward(p, cache, up)
    np.testing.assert_allclose(g.weights[0], x.T @ up)
    np.testing.assert_allclose(g.biases[0], up.sum(0))
    np.testing.assert_allclose(g.inputs, up @ p.weights[0].T)


@pytest.mark.parametrize("activation", ["sigmoid", "identity"])
def test_full_net_gradient_check(activation, np_rng):
    p = init_xavier((5, 16, 16, 3), Rng(3), activation, dtype=np.float64)
    for b in p.biases:
        b[...] = np_rng.standard_normal(b.shape) * 0.1
    x = np_rng.standard_normal((9, 5))
    target = np_rng.uniform(size=(9, 3))

    def f(flat):
        set_flat(p, flat)
        out, cache = forward(p, x)
        loss = float(np.mean((out - target) ** 2))
        g = backward(p, cache, 2 * (out - target) / out.size)
        return loss, flat_params(g)

    assert check_gradient(f, flat_params(p), 1e-5) <= 1e-6


def test_input_gradient_check(np_rng):
    p = init_xavier((4, 8, 2), Rng(4), "identity", dtype=np.float64)
    probe = np_rng.standard_normal((3, 2))

    def f(flat):
        x = flat.reshape(3, 4)
        out, cache = forward(p, x)
        return float(np.sum(out * probe)), backward(p, cache, probe).inputs.ravel()

    assert check_gradient(f, np_rng.standard_normal(12), 1e-5) <= 1e-6


def test_leaky_derivative_tie_at_zero():
    p = MlpParams([np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)], "identity")
    _, cache = forward(p, np.zeros((1, 1)))
    g = backward(p, cache, np.ones((1, 1)))
    assert g.inputs[0, 0] == pytest.approx(0.01)


def test_forward_backward_is_pure(np_rng):
    p = init_xavier((4, 8, 8, 3), Rng(5))
    before = [a.copy() for a in p.arrays]
    out, cache = forward(p, np_rng.standard_normal((10, 4)).astype(np.float32))
    backward(p, cache, np.ones_like(out))
    for a, b in zip(before, p.arrays):
        assert a.tobytes() == b.tobytes()


def test_batch_invariance(np_rng):
    p = init_xavier((4, 16, 16, 3), Rng(6))
    x = np_rng.standard_normal((12, 4)).astype(np.float32)
    full, _ = forward(p, x)
    for i in range(12):
        np.testing.assert_allclose(forward(p, x[i:i + 1])[0][0], full[i], atol=1e-6)


def test_sigmoid_stable_for_large_inputs():
    with np.errstate(over="raise"):
        s = network.sigmoid(np.array([-1000.0, -40.0, 0.0, 40.0, 1000.0]))
    assert s[0] == 0.0 and s[2] == 0.5 and s[-1] == 1.0
