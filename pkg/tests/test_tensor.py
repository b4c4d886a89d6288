import numpy as np
import pytest

from metsfuse.nn import ops
from metsfuse.nn.tensor import ShapeError, Tape, Tensor, active_tape


def test_tensor_wraps_float64():
    t = Tensor([[1, 2], [3, 4]])
    assert t.data.dtype == np.float64
    assert t.shape == (2, 2)
    assert t.size == 4


def test_item_requires_scalar():
    assert Tensor(3.5).item() == 3.5
    with pytest.raises(ShapeError):
        Tensor([1.0, 2.0]).item()


def test_tape_stack_nesting():
    assert active_tape() is None
    with Tape() as outer:
        assert active_tape() is outer
        with Tape() as inner:
            assert active_tape() is inner
        assert active_tape() is outer
    assert active_tape() is None


def test_backward_simple_product():
    # d(x*y)/dx = y, d(x*y)/dy = x
    x = Tensor([2.0, 3.0], requires_grad=True)
    y = Tensor([5.0, 7.0], requires_grad=True)
    with Tape() as tape:
        loss = ops.sum_all(ops.mul(x, y))
    grads = tape.backward(loss)
    np.testing.assert_array_equal(grads[x], [5.0, 7.0])
    np.testing.assert_array_equal(grads[y], [2.0, 3.0])


def test_backward_accumulates_reused_tensor():
    # z = x*x + x, dz/dx = 2x + 1 exercises the fan-out sum
    x = Tensor([1.5, -2.0], requires_grad=True)
    with Tape() as tape:
        loss = ops.sum_all(ops.add(ops.mul(x, x), x))
    grads = tape.backward(loss)
    np.testing.assert_allclose(grads[x], 2.0 * x.data + 1.0)


def test_backward_rejects_nonscalar_loss():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        out = ops.mul(x, 2.0)
    with pytest.raises(ShapeError):
        tape.backward(out)


def test_unreachable_param_gets_zeros():
    x = Tensor([1.0], requires_grad=True)
    unused = Tensor([[1.0, 2.0]], requires_grad=True)
    with Tape() as tape:
        loss = ops.sum_all(ops.mul(x, x))
    grads = tape.backward(loss, params=[x, unused])
    np.testing.assert_array_equal(grads[unused], np.zeros((1, 2)))
    assert grads[x].shape == (1,)


def test_constant_inputs_are_not_leaves():
    x = Tensor([1.0, 2.0], requires_grad=True)
    c = Tensor([3.0, 4.0])
    with Tape() as tape:
        loss = ops.sum_all(ops.mul(x, c))
    grads = tape.backward(loss)
    assert x in grads
    assert c not in grads


def test_loss_that_is_itself_a_leaf():
    x = Tensor(4.0, requires_grad=True)
    with Tape() as tape:
        pass
    grads = tape.backward(x)
    np.testing.assert_array_equal(grads[x], 1.0)


def test_two_backward_calls_are_independent():
    x = Tensor([3.0], requires_grad=True)
    with Tape() as tape:
        loss = ops.sum_all(ops.mul(x, x))
    g1 = tape.backward(loss)
    g2 = tape.backward(loss)
    np.testing.assert_array_equal(g1[x], g2[x])


def test_ops_outside_tape_record_nothing():
    x = Tensor([1.0], requires_grad=True)
    out = ops.mul(x, 3.0)
    np.testing.assert_array_equal(out.data, [3.0])
    with Tape() as tape:
        ops.mul(x, 2.0)
        n_inside = len(tape)
    assert n_inside == 1
