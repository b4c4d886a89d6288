"""Mini-batch training with validation-AUROC checkpointing.

Each epoch shuffles the training records with a stream derived from
(seed, epoch), steps AdamW over batches, then scores the validation
partition in eval mode. The best parameter snapshot by validation AUROC
is kept; training stops at max_epochs or once patience epochs pass
without improvement. A non-finite loss or activation aborts with the
last finite snapshot attached.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from metsfuse.errors import DataError
from metsfuse.metrics import auroc, confusion, metrics
from metsfuse.models.losses import batch_loss
from metsfuse.models.network import FusionNetwork, HyperParams
from metsfuse.nn.optim import AdamW
from metsfuse.nn.tensor import NonFiniteError, Tape
from metsfuse.rng import derived_rng


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_ce: float
    train_con: float
    val_acc: float
    val_pre: float
    val_rec: float
    val_f1: float
    val_auroc: float


@dataclass
class StepLog:
    epoch: int
    step: int
    loss: float
    ce: float
    con: float


@dataclass
class TrainHistory:
    epochs: list[EpochLog] = field(default_factory=list)
    steps: list[StepLog] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best_val_auroc(self) -> float:
        if not self.best_epoch:
            raise DataError("no epochs trained")
        return self.epochs[self.best_epoch - 1].val_auroc

    def to_csv(self, path: str | Path) -> None:
        cols = ["epoch", "train_loss", "train_ce", "train_con",
                "val_acc", "val_pre", "val_rec", "val_f1", "val_auroc"]
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f)
            w.writerow(cols)
            for e in self.epochs:
                w.writerow([e.epoch] + [repr(getattr(e, c)) for c in cols[1:]])


class DivergenceError(ArithmeticError):
    """Training hit a non-finite value; carries the last finite snapshot."""

    def __init__(self, message: str, checkpoint: dict | None, history: TrainHistory):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.history = history


def _batches(n: int, batch_size: int, order: np.ndarray) -> list[np.ndarray]:
    spans = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(spans) > 1 and spans[-1].size == 1:
        spans[-2] = np.concatenate([spans[-2], spans[-1]])
        spans.pop()
    return spans


def _require_both_classes(y: np.ndarray, name: str) -> None:
    y = np.asarray(y).astype(int)
    if (y == 1).sum() == 0 or (y == 0).sum() == 0:
        raise DataError(f"{name} partition must contain both classes")


def train_network(
    net: FusionNetwork,
    train_ids: list[np.ndarray],
    train_phys: np.ndarray,
    train_y: np.ndarray,
    val_ids: list[np.ndarray],
    val_phys: np.ndarray,
    val_y: np.ndarray,
    hp: HyperParams | None = None,
) -> tuple[dict[str, np.ndarray], TrainHistory]:
    """Returns (best parameter snapshot, history); net keeps its final state."""
    hp = hp or net.hp
    hp.validate()
    train_y = np.asarray(train_y, dtype=np.float64)
    val_y = np.asarray(val_y).astype(int)
    _require_both_classes(train_y, "training")
    _require_both_classes(val_y, "validation")
    n = len(train_ids)

    params = net.parameters()
    opt = AdamW(params, lr=hp.learning_rate, weight_decay=hp.weight_decay)
    history = TrainHistory()
    best_state: dict | None = None
    best_auroc = -np.inf
    stale = 0

    for epoch in range(1, hp.max_epochs + 1):
        epoch_start = net.get_state()
        order = derived_rng(hp.seed, "shuffle", epoch).permutation(n)
        sums = np.zeros(3)
        for step, idx in enumerate(_batches(n, hp.batch_size, order), start=1):
            drop_rng = derived_rng(hp.seed, "dropout", epoch, step)
            batch_ids = [train_ids[i] for i in idx]
            try:
                with Tape() as tape:
                    logits, z = net.forward(batch_ids, train_phys[idx], train=True, drop_rng=drop_rng)
                    loss, l_ce, l_con = batch_loss(logits, z, train_y[idx], hp)
                values = (loss.item(), l_ce.item(), l_con.item())
                if not np.isfinite(values[0]):
                    raise NonFiniteError(f"loss became {values[0]}")
                grads = tape.backward(loss, params=params)
                opt.step(grads)
            except NonFiniteError as exc:
                current = net.get_state()
                finite = all(np.all(np.isfinite(v)) for v in current.values())
                checkpoint = current if finite else (best_state or epoch_start)
                raise DivergenceError(
                    f"training diverged at epoch {epoch} step {step}: {exc}", checkpoint, history
                ) from exc
            history.steps.append(StepLog(epoch, step, *values))
            sums += np.array(values) * idx.size
        val_scores = net.predict_proba(val_ids, val_phys)[:, 1]
        m = metrics(confusion(val_scores, val_y))
        va = auroc(val_scores, val_y)
        history.epochs.append(EpochLog(
            epoch=epoch,
            train_loss=float(sums[0] / n), train_ce=float(sums[1] / n), train_con=float(sums[2] / n),
            val_acc=m.acc, val_pre=m.pre, val_rec=m.rec, val_f1=m.f1, val_auroc=va,
        ))
        if va > best_auroc:
            best_auroc = va
            best_state = net.get_state()
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= hp.patience:
                break
    assert best_state is not None
    return best_state, history
