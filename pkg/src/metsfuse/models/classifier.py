"""Scikit-learn-style front end over the fusion networks.

fit() builds the vocabulary and feature spec from the training records
only, trains with validation-AUROC checkpointing, and loads the best
snapshot. When no validation partition is given the training records
double as validation, which turns checkpoint selection into a training
fit measure; cross-validation always passes a held-out fold.
"""
from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from metsfuse.errors import DataError
from metsfuse.models.network import FusionNetwork, HyperParams
from metsfuse.models.training import TrainHistory, train_network
from metsfuse.nn.checkpoint import read_checkpoint, write_checkpoint
from metsfuse.preprocess import FeatureSpec, PhysioFeatures
from metsfuse.records import DailyRecord
from metsfuse.rng import derived_rng
from metsfuse.text import PAD_ID, Vocabulary, tokenize

_CHECKPOINT = "checkpoint.bin"
_VOCAB = "vocab.tsv"
_FEATURES = "feature_spec.json"


class FusionClassifier(ClassifierMixin, BaseEstimator):
    def __init__(
        self,
        architecture: str = "TS_HCL",
        reduced_dim: int = 3,
        hidden_dim: int = 32,
        dropout_p: float = 0.3,
        alpha: float = 0.7,
        epsilon_margin: float = 0.5,
        learning_rate: float = 1e-4,
        batch_size: int = 32,
        max_epochs: int = 50,
        patience: int = 10,
        seed: int = 0,
        weight_decay: float = 0.01,
        margin_on_distance: bool = False,
        vocab_size: int = 2048,
        d_model: int = 32,
        n_heads: int = 2,
        n_blocks: int = 2,
        ff_dim: int = 64,
        max_len: int = 64,
        pool: str = "mean",
        feature_alpha: float = 0.01,
    ):
        self.architecture = architecture
        self.reduced_dim = reduced_dim
        self.hidden_dim = hidden_dim
        self.dropout_p = dropout_p
        self.alpha = alpha
        self.epsilon_margin = epsilon_margin
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.weight_decay = weight_decay
        self.margin_on_distance = margin_on_distance
        self.vocab_size = vocab_size
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_blocks = n_blocks
        self.ff_dim = ff_dim
        self.max_len = max_len
        self.pool = pool
        self.feature_alpha = feature_alpha

    def _hp(self) -> HyperParams:
        # TS_H is the contrastive ablation: same wiring, cross-entropy only
        alpha = 1.0 if self.architecture == "TS_H" else self.alpha
        return HyperParams(
            reduced_dim=self.reduced_dim, hidden_dim=self.hidden_dim,
            dropout_p=self.dropout_p, alpha=alpha,
            epsilon_margin=self.epsilon_margin, learning_rate=self.learning_rate,
            batch_size=self.batch_size, max_epochs=self.max_epochs,
            patience=self.patience, seed=self.seed,
            weight_decay=self.weight_decay, margin_on_distance=self.margin_on_distance,
        )

    def _encode_ids(self, records: list[DailyRecord]) -> list[np.ndarray]:
        out = []
        truncated = 0
        for r in records:
            if r.text is None or not r.text.strip():
                raise DataError(f"record {r.subject_id}/{r.day_index} has no text; run clean first")
            seq = tokenize(r.text)
            if len(seq) > self.max_len:
                truncated += 1
            ids = self.vocab_.encode(seq, self.max_len)
            while len(ids) > 1 and ids[-1] == PAD_ID:
                ids.pop()
            out.append(np.asarray(ids, dtype=np.int64))
        if truncated:
            warnings.warn(f"{truncated} texts truncated to max_len {self.max_len}", stacklevel=2)
        return out

    def fit(self, X: list[DailyRecord], y, val_records: list[DailyRecord] | None = None, val_y=None):
        y = np.asarray(y).astype(int)
        if y.shape != (len(X),):
            raise DataError(f"{len(X)} records vs labels of shape {y.shape}")
        if val_records is None:
            val_records, val_y = X, y
        elif val_y is None:
            raise DataError("val_records given without val_y")
        else:
            val_y = np.asarray(val_y).astype(int)

        self.vocab_ = Vocabulary.build([r.text for r in X], max_size=self.vocab_size)
        self.features_ = PhysioFeatures(alpha=self.feature_alpha).fit(X, y)
        hp = self._hp()
        self.net_ = FusionNetwork(
            self.architecture, len(self.vocab_), self.features_.features_, hp,
            derived_rng(self.seed, "init"),
            d_model=self.d_model, n_heads=self.n_heads, n_blocks=self.n_blocks,
            ff_dim=self.ff_dim, max_len=self.max_len, pool=self.pool,
        )
        best, history = train_network(
            self.net_,
            self._encode_ids(X), self.features_.transform(X), y,
            self._encode_ids(val_records), self.features_.transform(val_records), val_y,
            hp,
        )
        self.net_.set_state(best)
        self.history_: TrainHistory = history
        self.classes_ = np.array([0, 1])
        return self

    def _chunks(self, n: int, size: int = 64):
        for i in range(0, n, size):
            yield slice(i, min(i + size, n))

    def predict_proba(self, X: list[DailyRecord]) -> np.ndarray:
        check_is_fitted(self, "net_")
        ids = self._encode_ids(X)
        phys = self.features_.transform(X)
        rows = [self.net_.predict_proba(ids[s], phys[s]) for s in self._chunks(len(X))]
        return np.vstack(rows)

    def predict(self, X: list[DailyRecord]) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)

    def text_embeddings(self, X: list[DailyRecord]) -> np.ndarray:
        """Eval-mode pooled text embeddings, one row per record."""
        check_is_fitted(self, "net_")
        ids = self._encode_ids(X)
        rows = [self.net_.encoder.encode_batch(ids[s]).data for s in self._chunks(len(X))]
        return np.vstack(rows)

    def proba_from_embeddings(self, text_embs: np.ndarray, phys: np.ndarray) -> np.ndarray:
        check_is_fitted(self, "net_")
        rows = [
            self.net_.proba_from_embeddings(text_embs[s], phys[s])
            for s in self._chunks(len(text_embs))
        ]
        return np.vstack(rows)

    def save(self, out_dir: str | Path) -> None:
        """Persist checkpoint, vocabulary, and feature spec into a directory."""
        check_is_fitted(self, "net_")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_checkpoint(
            out / _CHECKPOINT,
            self.net_.get_state(),
            architecture=self.architecture,
            hyperparams=self.get_params(),
            seed=self.seed,
        )
        self.vocab_.save(out / _VOCAB)
        (out / _FEATURES).write_text(
            json.dumps(self.features_.spec_.to_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, out_dir: str | Path) -> "FusionClassifier":
        out = Path(out_dir)
        header, state = read_checkpoint(out / _CHECKPOINT)
        clf = cls(**header["hyperparams"])
        clf.vocab_ = Vocabulary.load(out / _VOCAB)
        spec = FeatureSpec.from_dict(json.loads((out / _FEATURES).read_text(encoding="utf-8")))
        feats = PhysioFeatures(alpha=spec.alpha)
        feats.spec_ = spec
        feats.features_ = list(spec.features)
        feats.n_features_out_ = len(spec.features)
        clf.features_ = feats
        clf.net_ = FusionNetwork(
            clf.architecture, len(clf.vocab_), spec.features, clf._hp(),
            derived_rng(clf.seed, "init"),
            d_model=clf.d_model, n_heads=clf.n_heads, n_blocks=clf.n_blocks,
            ff_dim=clf.ff_dim, max_len=clf.max_len, pool=clf.pool,
        )
        clf.net_.set_state(state)
        clf.classes_ = np.array([0, 1])
        return clf
