import numpy as np
import pytest

from trkd.exceptions import InvalidParameterError, ShapeError, StateError
from trkd.gradcheck import numerical_gradient, relative_error
from trkd.network import LrSchedule, Mlp, MlpSpec, lr_at, sgd_step


def test_zero_weights_give_zero_output():
    net = Mlp([np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
    assert not net.forward(np.ones((5, 3))).any()


def test_forward_matches_matmul_oracle(rng):
    net = Mlp.init(MlpSpec((4, 6, 5, 3)), rng)
    for b in net.biases:
        b[:] = rng.normal(size=b.shape)
    X = rng.normal(size=(7, 4))
    h = X
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ W + b
        if i < 2:
            h = np.where(h > 0, h, 0.0)
    np.testing.assert_allclose(net.forward(X), h, rtol=1e-14)


def test_identity_layers_pass_positive_inputs():
    net = Mlp([np.eye(3), np.eye(3)], [np.zeros(3), np.zeros(3)])
    X = np.array([[1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(net.forward(X), X)


def test_linear_gradient_is_outer_product():
    net = Mlp([np.eye(2), 2 * np.eye(2)], [np.zeros(2), np.zeros(2)])
    X = np.array([[1.0, 3.0]])
    net.forward(X)
    gW0, gb0, gW1, gb1 = net.backward(np.array([[1.0, -1.0]]))
    np.testing.assert_array_equal(gW1, np.outer([1.0, 3.0], [1.0, -1.0]))
    np.testing.assert_array_equal(gb1, [1.0, -1.0])
    np.testing.assert_array_equal(gb0, [2.0, -2.0])


def test_full_backward_matches_finite_differences(rng):
    net = Mlp.init(MlpSpec((4, 5, 3)), rng)
    X, R = rng.normal(size=(6, 4)), rng.normal(size=(6, 3))
    net.forward(X)
    grads = net.backward(R)
    def f_of(p, v):
        saved = p.copy()
        p[...] = v
        out = np.sum(net.forward(X, False) * R)
        p[...] = saved
        return out

    for p, g in zip(net.params, grads):
        fd = numerical_gradient(lambda v: f_of(p, v), p.copy())
        assert relative_error(g, fd) <= 1e-5


def test_backward_needs_forward(rng):
    net = Mlp.init(MlpSpec((2, 3, 2)), rng)
    with pytest.raises(StateError):
        net.backward(np.zeros((1, 2)))
    net.forward(np.zeros((1, 2)))
    net.backward(np.zeros((1, 2)))
    with pytest.raises(StateError):
        net.backward(np.zeros((1, 2)))
    with pytest.raises(ShapeError):
        net.forward(np.zeros((1, 3)))


def test_spec_validation():
    with pytest.raises(InvalidParameterError):
        MlpSpec((3, 2))
    with pytest.raises(InvalidParameterError):
        MlpSpec((3, 0, 2))


def test_init_is_seeded_he_uniform():
    a = Mlp.init(MlpSpec((50, 40, 3)), np.random.default_rng(3))
    b = Mlp.init(MlpSpec((50, 40, 3)), np.random.default_rng(3))
    assert all(np.array_equal(p, q) for p, q in zip(a.params, b.params))
    assert np.abs(a.weights[0]).max() <= np.sqrt(6 / 50)
    assert not a.biases[0].any()


def test_sgd_two_steps_by_hand():
    w, v = [np.array([1.0])], [np.zeros(1)]
    sgd_step(w, [np.array([2.0])], v, lr=0.1, momentum=0.9)
    assert w[0][0] == pytest.approx(0.8) and v[0][0] == pytest.approx(2.0)
    sgd_step(w, [np.array([1.0])], v, lr=0.1, momentum=0.9)
    assert v[0][0] == pytest.approx(2.8) and w[0][0] == pytest.approx(0.52)


def test_sgd_degenerate_settings():
    w, v = [np.array([1.0, 2.0])], [np.zeros(2)]
    sgd_step(w, [np.ones(2)], v, lr=0.0, momentum=0.9)
    np.testing.assert_array_equal(w[0], [1.0, 2.0])
    w, v = [np.array([1.0])], [np.array([5.0])]
    sgd_step(w, [np.array([1.0])], v, lr=1.0, momentum=0.0)
    assert w[0][0] == 0.0
    with pytest.raises(ShapeError):
        sgd_step(w, [np.ones(2)], v, 0.1, 0.9)


def test_lr_schedule():
    s = LrSchedule(0.1, 5e-5, 10, 100)
    assert lr_at(s, 0) == 0.0
    assert lr_at(s, 5) == pytest.approx(0.05)
    assert lr_at(s, 10) == pytest.approx(0.1)
    assert lr_at(s, 99) == pytest.approx(5e-5, rel=1e-12)
    lrs = [s(k) for k in range(10, 100)]
    assert np.all(np.diff(lrs) < 0)
    with pytest.raises(InvalidParameterError):
        LrSchedule(0.1, 0.2, 1, 10)
