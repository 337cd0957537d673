import numpy as np
import pytest

from tiergraph import numeric as nm


def test_identity_and_hand_product():
    B = nm.constant([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(nm.matmul(nm.constant(np.eye(2)), B).value, B.value)
    out = nm.matmul(nm.constant([[1, 2], [3, 4]]), nm.constant([[5], [6]]))
    assert out.value.tolist() == [[17.0], [39.0]]


def test_matmul_shape_mismatch():
    with pytest.raises(nm.ShapeMismatch):
        nm.matmul(nm.constant(np.ones((2, 3))), nm.constant(np.ones((4, 2))))


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_non_finite_trips():
    with pytest.raises(nm.NonFiniteValue):
        nm.constant([[np.inf]])
    big = nm.constant([[1e308]])
    with pytest.raises(nm.NonFiniteValue):
        nm.scale(big, 10.0)


def test_matmul_associativity():
    rng = np.random.default_rng(0)
    for _ in range(10):
        A, B, C = (nm.constant(rng.normal(size=(8, 8))) for _ in range(3))
        left = nm.matmul(nm.matmul(A, B), C).value
        right = nm.matmul(A, nm.matmul(B, C)).value
        assert np.max(np.abs(left - right)) <= 1e-10 * np.max(np.abs(left))


def test_backward_mse_closed_form():
    W = nm.Param([[0.7]])
    x, y = 2.0, 3.0
    nm.backward(nm.mse(nm.matmul(W, nm.constant([[x]])), [[y]]))
    assert W.grad[0, 0] == pytest.approx(2 * (0.7 * x - y) * x)


def test_constant_loss_zero_grad():
    W = nm.Param([[1.0, 2.0]])
    loss = nm.add(nm.scale(nm.total(W), 0.0), nm.constant([[5.0]]))
    nm.backward(loss)
    assert np.all(W.grad == 0)


def test_dead_relu_zero_grad():
    W = nm.Param(-np.ones((3, 2)))
    nm.backward(nm.total(nm.relu(W)))
    assert np.all(W.grad == 0)


def test_backward_requires_scalar():
    W = nm.Param(np.ones((2, 2)))
    with pytest.raises(nm.NotAScalar):
        nm.backward(nm.relu(W))


def test_grad_check_quadratic():
    rng = np.random.default_rng(1)
    Q = rng.normal(size=(3, 3))
    Q = Q @ Q.T
    w = nm.Param(rng.normal(size=(1, 3)))

    def f():
        return nm.matmul(nm.matmul(w, nm.constant(Q)), nm.transpose(w))

    assert nm.grad_check(f, [w]) < 1e-6


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_grad_check_two_layer_mlp(seed):
    rng = np.random.default_rng(seed)
    X = nm.constant(rng.normal(size=(4, 13)))
    Y = rng.normal(size=(4, 2))
    W1, b1 = nm.Param(rng.normal(size=(13, 8))), nm.Param(rng.normal(size=(1, 8)))
    W2, b2 = nm.Param(rng.normal(size=(8, 2))), nm.Param(rng.normal(size=(1, 2)))

    def f():
        h = nm.relu(nm.add(nm.matmul(X, W1), b1))
        return nm.mse(nm.add(nm.matmul(h, W2), b2), Y)

    assert nm.grad_check(f, [W1, b1, W2, b2]) < 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_grad_check_elementwise_ops(seed):
    rng = np.random.default_rng(seed)
    a = nm.Param(rng.normal(size=(3, 4)))
    b = nm.Param(rng.normal(size=(1, 4)))
    t = (rng.random(size=(3, 4)) > 0.5).astype(float)

    def f():
        x = nm.hadamard(nm.sub(a, b), nm.sigmoid(a))
        s = nm.row_sum(x)
        stacked = nm.concat_rows([x, nm.transpose(nm.transpose(b))])
        return nm.add(nm.add(nm.bce_with_logits(x, t), nm.bce(nm.sigmoid(stacked), np.vstack([t, t[:1]]))), nm.total(nm.scale(s, 0.1)))

    assert nm.grad_check(f, [a, b]) < 1e-4


def test_grad_check_no_params():
    assert nm.grad_check(lambda: nm.constant([[1.0]]), []) == 0.0


def test_bce_with_logits_matches_bce():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(5, 5)) * 3
    t = (rng.random(size=(5, 5)) > 0.5).astype(float)
    a = nm.bce_with_logits(nm.constant(x), t).item()
    b = nm.bce(nm.sigmoid(nm.constant(x)), t).item()
    assert a == pytest.approx(b, rel=1e-10)


def test_sgd_step():
    w = nm.Param([[1.0]])
    nm.backward(nm.hadamard(w, w))
    nm.sgd_step([w], lr=0.1)
    assert w.value[0, 0] == pytest.approx(0.8)


def test_lr_zero_leaves_params():
    for step in (lambda p: nm.sgd_step(p, 0.0), lambda p: nm.adam_step(p, 0.0)):
        w = nm.Param([[1.5, -2.0]])
        nm.backward(nm.total(nm.hadamard(w, w)))
        step([w])
        assert w.value.tolist() == [[1.5, -2.0]]


@pytest.mark.parametrize("scale", [1e-3, 1.0, 1e6])  # well above eps_opt = 1e-8
def test_adam_first_step_magnitude(scale):
    w = nm.Param([[0.0, 0.0]])
    w.grad = np.array([[scale, -scale]])
    nm.adam_step([w], lr=1e-3)
    assert np.allclose(np.abs(w.value), 1e-3, rtol=1e-4)


def test_adam_state_is_per_param():
    a, b = nm.Param([[1.0]]), nm.Param([[1.0]])
    a.grad = np.array([[1.0]])
    nm.adam_step([a], lr=0.1)
    a.grad = np.array([[1.0]])
    b.grad = np.array([[1.0]])
    nm.adam_step([a, b], lr=0.1)
    assert a.state["adam"][0] == 2 and b.state["adam"][0] == 1


def test_broadcast_add_grad():
    W = nm.Param(np.zeros((1, 3)))
    X = nm.constant(np.ones((4, 3)))
    nm.backward(nm.total(nm.add(X, W)))
    assert W.grad.tolist() == [[4.0, 4.0, 4.0]]


def test_training_is_deterministic():
    def run():
        rng = np.random.default_rng(5)
        W = nm.Param(rng.normal(size=(3, 1)))
        X = nm.constant(rng.normal(size=(6, 3)))
        y = rng.normal(size=(6, 1))
        opt = nm.Adam([W], lr=0.05)
        for _ in range(20):
            opt.zero_grad()
            nm.backward(nm.mse(nm.matmul(X, W), y))
            opt.step()
        return W.value.copy()

    assert np.array_equal(run(), run())
