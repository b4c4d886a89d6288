import numpy as np
import pytest

from metsfuse.nn.optim import AdamW
from metsfuse.nn.tensor import NonFiniteError, Tensor


def _reference_adamw(w0, grads, lr, betas, eps, decay):
    """Straight-line reimplementation of the update rule, no shared state."""
    w = w0.copy()
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    b1, b2 = betas
    for t, g in enumerate(grads, start=1):
        w = w - lr * decay * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        w = w - lr * m_hat / (np.sqrt(v_hat) + eps)
    return w


def test_matches_reference_updates():
    rng = np.random.default_rng(0)
    w0 = rng.normal(size=(4, 3))
    grads = [rng.normal(size=(4, 3)) for _ in range(7)]
    p = Tensor(w0.copy(), requires_grad=True)
    opt = AdamW([p], lr=0.01, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.02)
    for g in grads:
        opt.step({p: g})
    want = _reference_adamw(w0, grads, 0.01, (0.9, 0.999), 1e-8, 0.02)
    np.testing.assert_allclose(p.data, want, atol=1e-14)


def test_decay_is_decoupled_from_gradient():
    # with zero gradient the moments stay zero, so the only movement is the
    # multiplicative shrink: w_t = w_0 * (1 - lr*decay)^t
    p = Tensor(np.array([2.0, -3.0]), requires_grad=True)
    opt = AdamW([p], lr=0.1, weight_decay=0.5)
    for _ in range(3):
        opt.step({p: np.zeros(2)})
    np.testing.assert_allclose(p.data, np.array([2.0, -3.0]) * (1 - 0.1 * 0.5) ** 3, atol=1e-15)


def test_zero_decay_reduces_to_adam():
    rng = np.random.default_rng(1)
    w0 = rng.normal(size=5)
    g = rng.normal(size=5)
    p = Tensor(w0.copy(), requires_grad=True)
    opt = AdamW([p], lr=0.05, weight_decay=0.0)
    opt.step({p: g})
    # single step of Adam: m_hat = g, v_hat = g*g
    want = w0 - 0.05 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(p.data, want, atol=1e-12)


def test_missing_grad_leaves_param_untouched():
    a = Tensor(np.ones(2), requires_grad=True)
    b = Tensor(np.ones(2), requires_grad=True)
    opt = AdamW([a, b], lr=0.1, weight_decay=0.0)
    opt.step({a: np.ones(2)})
    assert not np.array_equal(a.data, np.ones(2))
    np.testing.assert_array_equal(b.data, np.ones(2))


def test_state_roundtrip_resumes_identically():
    rng = np.random.default_rng(2)
    grads = [rng.normal(size=(3,)) for _ in range(6)]

    p_full = Tensor(np.ones(3), requires_grad=True)
    full = AdamW([p_full], lr=0.01)
    for g in grads:
        full.step({p_full: g})

    p_resumed = Tensor(np.ones(3), requires_grad=True)
    first = AdamW([p_resumed], lr=0.01)
    for g in grads[:3]:
        first.step({p_resumed: g})
    saved = first.state()

    second = AdamW([p_resumed], lr=0.01)
    second.load_state(saved)
    for g in grads[3:]:
        second.step({p_resumed: g})

    np.testing.assert_array_equal(p_resumed.data, p_full.data)


def test_state_shape_mismatch_rejected():
    opt = AdamW([Tensor(np.ones(2), requires_grad=True)], lr=0.1)
    with pytest.raises(ValueError):
        opt.load_state({"t": 1, "m": [], "v": []})


def test_nonfinite_gradient_raises():
    p = Tensor(np.ones(2), requires_grad=True)
    opt = AdamW([p], lr=0.1)
    with pytest.raises(NonFiniteError):
        opt.step({p: np.array([1.0, np.nan])})


def test_bad_hyperparameters_rejected():
    p = Tensor(np.ones(1), requires_grad=True)
    with pytest.raises(ValueError):
        AdamW([p], lr=0.0)
    with pytest.raises(ValueError):
        AdamW([p], lr=0.1, betas=(1.0, 0.999))
