"""Differentiable primitives over metsfuse.nn.Tensor.

Every operation validates operand shapes and finiteness up front, computes
the forward value with numpy, and registers a gradient rule on the active
tape when any input requires gradients. Broadcasting is limited to
bias-add (matrix + row vector) and scalars; anything else needs an
explicit reshape.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import erf

from metsfuse.nn.tensor import NonFiniteError, ShapeError, Tensor, active_tape

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _check_finite(op: str, *tensors: Tensor) -> None:
    for t in tensors:
        if not np.all(np.isfinite(t.data)):
            raise NonFiniteError(f"{op}: non-finite input (tensor {t.name or t.id})")


def _emit(op: str, out_data: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(out_data, requires_grad=any(t.requires_grad for t in inputs))
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, inputs, backward)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    _check_finite("matmul", a, b)
    ad, bd = a.data, b.data

    def backward(g):
        return g @ bd.T, ad.T @ g

    return _emit("matmul", ad @ bd, (a, b), backward)


def _binary(op: str, a: Tensor, b, fwd, back_ab, back_scalar):
    """Shared shape handling for add/sub/mul: same-shape, bias row, scalar."""
    if isinstance(b, (int, float)):
        _check_finite(op, a)
        c = float(b)
        if not math.isfinite(c):
            raise NonFiniteError(f"{op}: non-finite scalar operand")
        return _emit(op, fwd(a.data, c), (a,), lambda g: (back_scalar(g, c),))
    _check_finite(op, a, b)
    if a.shape == b.shape:
        mode = "same"
    elif a.data.ndim == 2 and b.data.ndim == 1 and b.shape[0] == a.shape[1]:
        mode = "bias"
    elif b.data.ndim == 0:
        mode = "scalar"
    else:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        return back_ab(g, mode)

    return _emit(op, fwd(a.data, b.data), (a, b), backward)


def _reduce_like(g: np.ndarray, mode: str) -> np.ndarray:
    if mode == "same":
        return g
    if mode == "bias":
        return g.sum(axis=0)
    return np.asarray(g.sum())


def add(a: Tensor, b) -> Tensor:
    return _binary(
        "add", a, b,
        fwd=lambda x, y: x + y,
        back_ab=lambda g, mode: (g, _reduce_like(g, mode)),
        back_scalar=lambda g, c: g,
    )


def sub(a, b) -> Tensor:
    if isinstance(a, (int, float)):
        c = float(a)
        if not math.isfinite(c):
            raise NonFiniteError("sub: non-finite scalar operand")
        _check_finite("sub", b)
        return _emit("sub", c - b.data, (b,), lambda g: (-g,))
    return _binary(
        "sub", a, b,
        fwd=lambda x, y: x - y,
        back_ab=lambda g, mode: (g, -_reduce_like(g, mode)),
        back_scalar=lambda g, c: g,
    )


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, (int, float)):
        ad, bd = a.data, b.data

        def back(g, mode):
            ga = g * bd
            if mode == "same":
                return ga, g * ad
            if mode == "bias":
                return ga, (g * ad).sum(axis=0)
            return ga, np.asarray((g * ad).sum())

        return _binary("mul", a, b, fwd=lambda x, y: x * y, back_ab=back, back_scalar=None)
    return _binary(
        "mul", a, b,
        fwd=lambda x, y: x * y,
        back_ab=None,
        back_scalar=lambda g, c: g * c,
    )


def relu(x: Tensor) -> Tensor:
    _check_finite("relu", x)
    xd = x.data
    return _emit("relu", np.maximum(xd, 0.0), (x,), lambda g: (g * (xd > 0.0),))


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x) with the Gaussian CDF."""
    _check_finite("gelu", x)
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * xd * xd)

    def backward(g):
        return (g * (cdf + xd * pdf),)

    return _emit("gelu", xd * cdf, (x,), backward)


def softmax(x: Tensor) -> Tensor:
    """Numerically stable softmax over the last axis."""
    _check_finite("softmax", x)
    xd = x.data
    shifted = xd - xd.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _emit("softmax", s, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    d = x.shape[-1] if x.data.ndim else 0
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain/bias must be ({d},), got {gain.shape} and {bias.shape}"
        )
    _check_finite("layer_norm", x, gain, bias)
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    var = xd.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv
    gd = gain.data

    def backward(g):
        lead = tuple(range(xd.ndim - 1))
        g_bias = g.sum(axis=lead) if lead else g
        g_gain = (g * xhat).sum(axis=lead) if lead else g * xhat
        gx_hat = g * gd
        g_x = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        return g_x, g_gain, g_bias

    return _emit("layer_norm", xhat * gd + bias.data, (x, gain, bias), backward)


def mean_pool(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of the rows of x selected by a 0/1 mask; x is (n, d), mask is (n,)."""
    mask = np.asarray(mask, dtype=np.float64)
    if x.data.ndim != 2 or mask.shape != (x.shape[0],):
        raise ShapeError(f"mean_pool: need (n, d) and mask (n,), got {x.shape} and {mask.shape}")
    count = mask.sum()
    if count <= 0:
        raise ShapeError("mean_pool: mask selects no rows")
    _check_finite("mean_pool", x)
    col = mask[:, None]

    def backward(g):
        return (col * g[None, :] / count,)

    return _emit("mean_pool", (col * x.data).sum(axis=0) / count, (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat: no operands")
    _check_finite("concat", *tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(
            f"concat: shapes {[t.shape for t in tensors]} on axis {axis}"
        ) from exc
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", out, tuple(tensors), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup into an embedding table; gradients scatter-add by row."""
    ids = np.asarray(ids)
    if table.data.ndim != 2 or ids.ndim != 1 or not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError(f"embedding: need 2-d table and 1-d int ids, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding: id out of range for table of {table.shape[0]} rows")
    _check_finite("embedding", table)

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _emit("embedding", table.data[ids], (table,), backward)


def dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-p) in train mode, identity in eval."""
    if not 0.0 <= p < 1.0:
        raise ShapeError(f"dropout: p must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ShapeError("dropout: train mode needs an explicit rng stream")
    _check_finite("dropout", x)
    keep = (rng.random(x.shape) >= p) / (1.0 - p)

    def backward(g):
        return (g * keep,)

    return _emit("dropout", x.data * keep, (x,), backward)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    _check_finite("reshape", x)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: {x.shape} to {shape}") from exc
    src = x.shape

    def backward(g):
        return (g.reshape(src),)

    return _emit("reshape", out, (x,), backward)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose: need a matrix, got {x.shape}")
    _check_finite("transpose", x)
    return _emit("transpose", x.data.T, (x,), lambda g: (g.T,))


def narrow(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) along one axis of a matrix."""
    if x.data.ndim != 2 or axis not in (0, 1):
        raise ShapeError(f"narrow: need a matrix and axis 0/1, got {x.shape}, axis {axis}")
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeError(f"narrow: [{start}, {stop}) out of range for axis {axis} of {x.shape}")
    _check_finite("narrow", x)
    sl = (slice(start, stop), slice(None)) if axis == 0 else (slice(None), slice(start, stop))

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[sl] = g
        return (gx,)

    return _emit("narrow", x.data[sl].copy(), (x,), backward)


def log(x: Tensor) -> Tensor:
    _check_finite("log", x)
    xd = x.data
    if np.any(xd <= 0.0):
        raise NonFiniteError("log: non-positive input")
    return _emit("log", np.log(xd), (x,), lambda g: (g / xd,))


def sqrt(x: Tensor) -> Tensor:
    _check_finite("sqrt", x)
    xd = x.data
    if np.any(xd <= 0.0):
        raise NonFiniteError("sqrt: non-positive input")
    root = np.sqrt(xd)
    return _emit("sqrt", root, (x,), lambda g: (g * 0.5 / root,))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes only strictly inside the interval."""
    if not lo < hi:
        raise ShapeError(f"clip: empty interval [{lo}, {hi}]")
    _check_finite("clip", x)
    xd = x.data
    inside = (xd > lo) & (xd < hi)
    return _emit("clip", np.clip(xd, lo, hi), (x,), lambda g: (g * inside,))


def sum_all(x: Tensor) -> Tensor:
    _check_finite("sum_all", x)
    shape = x.shape
    return _emit("sum_all", np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(x: Tensor) -> Tensor:
    _check_finite("mean_all", x)
    shape, n = x.shape, x.data.size

    def backward(g):
        return (np.broadcast_to(g / n, shape).copy(),)

    return _emit("mean_all", np.asarray(x.data.mean()), (x,), backward)


Tensor.__add__ = add
Tensor.__sub__ = sub
Tensor.__mul__ = mul
Tensor.__matmul__ = matmul
Tensor.__neg__ = lambda self: mul(self, -1.0)
