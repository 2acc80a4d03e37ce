import math

import numpy as np
import pytest

from trajlstm import tensor as T
from trajlstm.tensor import GradientTape, ShapeError, Tensor, finite_diff_check, grad


def test_tensor_rejects_non_finite():
    with pytest.raises(ValueError):
        Tensor([1.0, float("nan")])
    with pytest.raises(ValueError):
        Tensor([float("inf")])


def test_tensor_rejects_zero_extent():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((2, 0)))


def test_softmax_all_equal():
    p = T.softmax(Tensor([3.0, 3.0, 3.0, 3.0]))
    assert np.allclose(p.data, [0.25, 0.25, 0.25, 0.25], atol=1e-15)


def test_softmax_direct_arithmetic():
    p = T.softmax(Tensor([0.0, math.log(3.0)]))
    assert np.allclose(p.data, [0.25, 0.75], atol=1e-15)


def test_softmax_shift_invariance():
    logits = np.array([0.3, -1.2, 2.5, 0.0])
    a = T.softmax(Tensor(logits)).data
    b = T.softmax(Tensor(logits + 1000.0)).data
    assert np.max(np.abs(a - b)) < 1e-12


def test_softmax_sums_to_one():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.normal(scale=50.0, size=rng.integers(1, 30))
        p = T.softmax(Tensor(x)).data
        assert abs(p.sum() - 1.0) <= 1e-12
        assert (p >= 0).all()


def test_softmax_rejects_empty_and_matrix():
    with pytest.raises((ShapeError, ValueError)):
        T.softmax(Tensor(np.zeros((2, 2))))


def test_log_softmax_matches_softmax():
    x = Tensor([0.1, -0.7, 2.0])
    assert np.allclose(np.exp(T.log_softmax(x).data), T.softmax(x).data, atol=1e-15)


def test_grad_linear_loss_is_ones():
    params = [Tensor(np.arange(1.0, 7.0).reshape(2, 3)), Tensor([4.0, 5.0])]

    def loss():
        total = T.vsum(params[0])
        return T.add(total, T.vsum(params[1]))

    value, grads = grad(loss, params)
    assert value == pytest.approx(21.0 + 9.0)
    for p, g in zip(params, grads):
        assert g.shape == p.shape
        assert (g.data == 1.0).all()


def test_grad_constant_loss_is_zero():
    params = [Tensor([1.0, 2.0])]
    value, grads = grad(lambda: Tensor(0.0), params)
    assert value == 0.0
    assert (grads[0].data == 0.0).all()


def test_grad_rejects_non_scalar():
    p = Tensor([1.0, 2.0])
    with pytest.raises(ShapeError):
        grad(lambda: T.scale(p, 2.0), [p])


def test_matvec_shapes_and_backward():
    w = Tensor([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    x = Tensor([1.0, -1.0])

    def loss():
        return T.vsum(T.matvec(w, x))

    value, (gw, gx) = grad(loss, [w, x])
    assert value == pytest.approx(-1.0 - 1.0 - 1.0)
    assert np.allclose(gw.data, np.outer(np.ones(3), x.data))
    assert np.allclose(gx.data, w.data.T @ np.ones(3))
    with pytest.raises(ShapeError):
        T.matvec(w, Tensor([1.0, 2.0, 3.0]))


def test_tape_reuses_parameter():
    p = Tensor([2.0])

    def loss():
        return T.vsum(T.mul(p, p))

    value, (g,) = grad(loss, [p])
    assert value == pytest.approx(4.0)
    assert np.allclose(g.data, [4.0])


def test_ops_outside_tape_do_not_record():
    p = Tensor([1.0, 2.0])
    T.vsum(p)  # no active tape: must not blow up or leak records
    with GradientTape() as tape:
        tape.watch(p)
        loss = T.vsum(p)
    g = tape.gradients(loss, [p])[0]
    assert (g.data == 1.0).all()


def test_attach_scalar_routes_fixed_gradients():
    p = Tensor([1.0, 2.0, 3.0])

    def loss():
        doubled = T.scale(p, 2.0)
        return T.attach_scalar(7.5, [doubled], [np.array([1.0, 10.0, 100.0])])

    value, (g,) = grad(loss, [p])
    assert value == 7.5
    assert np.allclose(g.data, [2.0, 20.0, 200.0])


def test_finite_diff_quadratic_passes_tight():
    params = [Tensor([0.4, -1.3, 2.2])]

    def loss():
        return T.dot(params[0], params[0])

    report = finite_diff_check(loss, params, step=1e-5, tol=1e-6)
    assert report["passed"], report


def test_finite_diff_detects_corrupted_gradient():
    p = Tensor([0.5, 1.5])

    def loss():
        # attach deliberately wrong partials for a loss whose value is p0+p1
        return T.attach_scalar(p.data.sum(), [p], [np.array([3.0, 3.0])])

    report = finite_diff_check(loss, [p], step=1e-5, tol=1e-4)
    assert not report["passed"]


def test_finite_diff_rejects_bad_step():
    p = Tensor([1.0])
    with pytest.raises(ValueError):
        finite_diff_check(lambda: T.vsum(p), [p], step=0.0)
