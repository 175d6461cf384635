import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from cpsdrift.neuralnet import Adam, DenseNet, NumericalError, sgd_step

from oracles import central_diff, kink_margin, max_rel_err


def test_zero_net_outputs_zero():
    net = DenseNet.zeros([3, 4, 2])
    assert net.forward(np.ones(3)).tolist() == [0.0, 0.0]


def test_single_linear_layer():
    net = DenseNet([np.array([[2.0]])], [np.array([1.0])])
    assert net.forward([3.0]).tolist() == [7.0]


def test_relu_blocks_negative_preactivation():
    net = DenseNet([np.array([[1.0]]), np.array([[5.0]])], [np.array([-10.0]), np.array([0.5])])
    assert net.forward([3.0]).tolist() == [0.5]


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        DenseNet.zeros([3, 2]).forward(np.ones(4))
    with pytest.raises(ValueError):
        DenseNet([np.zeros((2, 3)), np.zeros((4, 1))], [np.zeros(3), np.zeros(1)])


def test_perfect_prediction_zero_grads():
    net = DenseNet.init([3, 5, 2], np.random.default_rng(0))
    x = np.array([0.1, -0.2, 0.3])
    loss, grads = net.grad(x, net.forward(x))
    assert loss == 0.0
    assert all(not g.any() for g in grads)


def test_hand_gradient():
    net = DenseNet([np.array([[1.0]])], [np.array([0.0])])
    loss, grads = net.grad([2.0], [0.0])
    assert loss == 4.0 and grads[0][0, 0] == 8.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_loss_raises():
    net = DenseNet([np.array([[1e308]])], [np.array([0.0])])
    with pytest.raises(NumericalError):
        net.grad([1e10], [0.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 12), st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**31))
def test_gradient_matches_finite_differences(n_in, hidden, n_out, batch, seed):
    rng = np.random.default_rng(seed)
    net = DenseNet.init([n_in, hidden, n_out], rng)
    for b in net.biases:
        b += rng.normal(scale=0.1, size=b.shape)
    X = rng.normal(size=(batch, n_in))
    Y = rng.normal(size=(batch, n_out))
    assume(kink_margin(net, X) > 1e-3)
    _, grads = net.grad(X, Y)
    params = net.params()
    fd = central_diff(lambda: net.grad(X, Y)[0], params)
    assert max_rel_err(grads, fd) < 1e-4


def test_forward_is_pure():
    net = DenseNet.init([4, 8, 3], np.random.default_rng(1))
    x = np.random.default_rng(2).normal(size=4)
    assert net.forward(x).tobytes() == net.forward(x).tobytes()


def test_glorot_bounds():
    net = DenseNet.init([10, 30], np.random.default_rng(0))
    assert np.abs(net.weights[0]).max() <= np.sqrt(6 / 40)
    assert not net.biases[0].any()


def test_serialisation_round_trip():
    net = DenseNet.init([3, 4, 2], np.random.default_rng(5))
    back = DenseNet.from_dict(net.to_dict())
    for a, b in zip(net.params(), back.params()):
        np.testing.assert_array_equal(a, b)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 20))
def test_adam_zero_gradient_identity(steps):
    p = [np.array([1.0, -2.0]), np.array([[3.0]])]
    before = [q.copy() for q in p]
    opt = Adam(lr=0.1)
    for _ in range(steps):
        opt.step(p, [np.zeros(2), np.zeros((1, 1))])
    for a, b in zip(p, before):
        np.testing.assert_array_equal(a, b)


def test_adam_first_step_magnitude_is_lr():
    p = [np.array([0.0, 0.0])]
    Adam(lr=1e-3).step(p, [np.array([5.0, -0.02])])
    # m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps)
    np.testing.assert_allclose(p[0], [-1e-3, 1e-3], rtol=1e-5)


def test_adam_deterministic():
    def run():
        p = [np.array([0.5, 0.1])]
        opt = Adam(lr=0.01)
        for g in ([1.0, 2.0], [0.3, -1.0]):
            opt.step(p, [np.array(g)])
        return p[0]
    assert run().tobytes() == run().tobytes()


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        Adam().step([np.zeros(2)], [np.zeros(3)])


def test_sgd_step():
    assert sgd_step([np.array(1.0)], [np.array(2.0)], 0.1)[0] == pytest.approx(0.8)
    p = [np.array([1.0, 2.0])]
    assert sgd_step(p, [np.array([3.0, 4.0])], 0.0)[0].tolist() == [1.0, 2.0]
    v = sgd_step([np.array([1.0, 3.0])], [np.array([2.0, 1.0])], 0.1)[0]
    assert v.tolist() == [sgd_step([np.array(1.0)], [np.array(2.0)], 0.1)[0],
                          sgd_step([np.array(3.0)], [np.array(1.0)], 0.1)[0]]
