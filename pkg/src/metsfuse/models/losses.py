"""Combined training objective: cross-entropy plus pairwise contrastive.

The contrastive term penalizes squared distance between same-label fused
representations and, for different labels, the shortfall of squared
distance below the margin — the margin applies to the squared distance,
not the distance. margin_on_distance=True switches to the classical
hinge-on-distance form for comparison.
"""
from __future__ import annotations

import numpy as np

from metsfuse.errors import DataError
from metsfuse.models.network import HyperParams
from metsfuse.nn import ops
from metsfuse.nn.tensor import Tensor

PROB_CLAMP = 1e-12


def cross_entropy(p_pos: Tensor, y: np.ndarray) -> Tensor:
    """Mean binary cross-entropy on the positive-class probability."""
    y = np.asarray(y, dtype=np.float64)
    if p_pos.shape != y.shape:
        raise DataError(f"cross_entropy: {p_pos.shape} probabilities vs {y.shape} labels")
    p = ops.clip(p_pos, PROB_CLAMP, 1.0 - PROB_CLAMP)
    ll = ops.add(
        ops.mul(Tensor(y), ops.log(p)),
        ops.mul(Tensor(1.0 - y), ops.log(ops.sub(1.0, p))),
    )
    return ops.mul(ops.mean_all(ll), -1.0)


def _margin_term(d2: Tensor, epsilon: float, margin_on_distance: bool) -> Tensor:
    if margin_on_distance:
        gap = ops.relu(ops.sub(epsilon, ops.sqrt(ops.add(d2, 1e-12))))
        return ops.mul(gap, gap)
    return ops.relu(ops.sub(epsilon, d2))


def contrastive_loss(
    z_i: Tensor,
    z_j: Tensor,
    y_i: int,
    y_j: int,
    epsilon: float,
    margin_on_distance: bool = False,
) -> Tensor:
    """One pair: same label pulls together, different labels push apart."""
    if z_i.shape != z_j.shape:
        raise DataError(f"contrastive_loss: shapes {z_i.shape} vs {z_j.shape}")
    diff = ops.sub(z_i, z_j)
    d2 = ops.sum_all(ops.mul(diff, diff))
    if int(y_i) == int(y_j):
        return d2
    return _margin_term(d2, epsilon, margin_on_distance)


def batch_contrastive(
    z: Tensor,
    y: np.ndarray,
    epsilon: float,
    margin_on_distance: bool = False,
) -> Tensor:
    """Mean of contrastive_loss over all unordered within-batch pairs.

    Uses the squared-distance matrix ||z_i||^2 + ||z_j||^2 - 2 z_i.z_j so
    the whole batch is a handful of matrix products.
    """
    n, d = z.shape
    if n < 2:
        raise DataError(f"batch_contrastive: need at least 2 rows, got {n}")
    y = np.asarray(y).astype(int)
    sq = ops.matmul(ops.mul(z, z), Tensor(np.ones((d, 1))))
    row = ops.matmul(sq, Tensor(np.ones((1, n))))
    d2 = ops.sub(ops.add(row, ops.transpose(row)), ops.mul(ops.matmul(z, ops.transpose(z)), 2.0))
    upper = np.triu(np.ones((n, n)), k=1)
    same = upper * (y[:, None] == y[None, :])
    diff = upper - same
    total = ops.add(
        ops.sum_all(ops.mul(d2, Tensor(same))),
        ops.sum_all(ops.mul(_margin_term(d2, epsilon, margin_on_distance), Tensor(diff))),
    )
    return ops.mul(total, 2.0 / (n * (n - 1)))


def batch_loss(logits: Tensor, z: Tensor, y: np.ndarray, hp: HyperParams) -> tuple[Tensor, Tensor, Tensor]:
    """Combined objective (L, L_CE, L_CON) with L = alpha*CE + (1-alpha)*CON."""
    n = logits.shape[0]
    y = np.asarray(y, dtype=np.float64)
    if n < 2 and hp.alpha < 1.0:
        raise DataError("batch of 1 cannot form contrastive pairs; need alpha = 1 or batch >= 2")
    probs = ops.softmax(logits)
    p_pos = ops.reshape(ops.narrow(probs, 1, 1, 2), (n,))
    l_ce = cross_entropy(p_pos, y)
    if hp.alpha < 1.0:
        l_con = batch_contrastive(z, y, hp.epsilon_margin, hp.margin_on_distance)
    else:
        l_con = Tensor(0.0)
    loss = ops.add(ops.mul(l_ce, hp.alpha), ops.mul(l_con, 1.0 - hp.alpha))
    return loss, l_ce, l_con
