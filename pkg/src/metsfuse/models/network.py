"""Fusion architectures over the text encoder and normalized physiology.

BASELINE concatenates the text embedding with every retained feature and
classifies through one hidden layer. The staged variants first project
the text embedding down to reduced_dim, then concatenate physiology in
architecture-specific order:

  THSCL   proj + hr_min + hr_max + steps, one hidden layer
  TS_HCL  (proj + steps) -> hidden -> (+ hr_min, hr_max) -> hidden
  TH_SCL  (proj + hr_min + hr_max) -> hidden -> (+ steps) -> hidden
  TS_H    same wiring as TS_HCL; training forces alpha = 1

The input to the final 2-logit head doubles as the fused representation
used by the contrastive loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from metsfuse.errors import DataError
from metsfuse.encoder import TextEncoder
from metsfuse.nn import ops
from metsfuse.nn.tensor import Tensor

ARCHITECTURES = ("BASELINE", "THSCL", "TS_HCL", "TH_SCL", "TS_H")
STAGED_FEATURES = ("hr_min", "hr_max", "steps")


@dataclass
class HyperParams:
    reduced_dim: int = 3
    hidden_dim: int = 32
    dropout_p: float = 0.3
    alpha: float = 0.7
    epsilon_margin: float = 0.5
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 10
    seed: int = 0
    weight_decay: float = 0.01
    margin_on_distance: bool = False

    def validate(self) -> None:
        if not 0 <= self.dropout_p < 1:
            raise DataError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if not 0 <= self.alpha <= 1:
            raise DataError(f"alpha must be in [0, 1], got {self.alpha}")
        if not self.epsilon_margin > 0:
            raise DataError(f"epsilon_margin must be positive, got {self.epsilon_margin}")
        for name in ("reduced_dim", "hidden_dim", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.learning_rate <= 0:
            raise DataError(f"learning_rate must be positive, got {self.learning_rate}")

    def to_dict(self) -> dict:
        return asdict(self)


class FusionNetwork:
    def __init__(
        self,
        architecture: str,
        vocab_size: int,
        feature_names: list[str],
        hp: HyperParams,
        rng: np.random.Generator,
        d_model: int = 32,
        n_heads: int = 2,
        n_blocks: int = 2,
        ff_dim: int = 64,
        max_len: int = 64,
        pool: str = "mean",
    ):
        if architecture not in ARCHITECTURES:
            raise DataError(f"unknown architecture {architecture!r}; one of {ARCHITECTURES}")
        hp.validate()
        self.architecture = architecture
        self.feature_names = list(feature_names)
        self.hp = hp
        # staged wiring consumes only the staged features that survived
        # selection; a dropped feature simply vanishes from its stage
        if architecture in ("TS_HCL", "TS_H"):
            first, second = ("steps",), ("hr_min", "hr_max")
        elif architecture == "TH_SCL":
            first, second = ("hr_min", "hr_max"), ("steps",)
        else:
            first, second = STAGED_FEATURES, ()
        self.stage_first = tuple(f for f in first if f in self.feature_names)
        self.stage_second = tuple(f for f in second if f in self.feature_names)
        self.encoder = TextEncoder(
            vocab_size, rng, d_model=d_model, n_heads=n_heads,
            n_blocks=n_blocks, ff_dim=ff_dim, max_len=max_len, pool=pool,
        )
        self.fusion: dict[str, Tensor] = {}
        self._init_fusion(rng)

    def _dense(self, rng, name: str, n_in: int, n_out: int) -> None:
        self.fusion[name + "_w"] = Tensor(rng.normal(0.0, 0.02, size=(n_in, n_out)), requires_grad=True, name=name + "_w")
        self.fusion[name + "_b"] = Tensor(np.zeros(n_out), requires_grad=True, name=name + "_b")

    def _init_fusion(self, rng: np.random.Generator) -> None:
        hp = self.hp
        d = self.encoder.d_model
        arch = self.architecture
        if arch == "BASELINE":
            self._dense(rng, "h1", d + len(self.feature_names), hp.hidden_dim)
        elif arch == "THSCL":
            self._dense(rng, "proj", d, hp.reduced_dim)
            self._dense(rng, "h1", hp.reduced_dim + len(self.stage_first), hp.hidden_dim)
        else:
            self._dense(rng, "proj", d, hp.reduced_dim)
            self._dense(rng, "h1", hp.reduced_dim + len(self.stage_first), hp.hidden_dim)
            self._dense(rng, "h2", hp.hidden_dim + len(self.stage_second), hp.hidden_dim)
        self._dense(rng, "head", hp.hidden_dim, 2)

    def params(self) -> dict[str, Tensor]:
        out = {f"enc.{k}": v for k, v in self.encoder.params.items()}
        out.update(self.fusion)
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.params().values())

    @property
    def param_count(self) -> int:
        return sum(int(np.prod(p.shape)) for p in self.parameters())

    def get_state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params().items()}

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        params = self.params()
        if set(state) != set(params):
            raise DataError("parameter names in state do not match this network")
        for k, v in state.items():
            arr = np.asarray(v, dtype=np.float64)
            if arr.shape != params[k].shape:
                raise DataError(f"parameter {k}: shape {arr.shape} vs expected {params[k].shape}")
            params[k].data = np.ascontiguousarray(arr)

    def _cols(self, phys: np.ndarray, names: tuple[str, ...]) -> Tensor:
        idx = [self.feature_names.index(n) for n in names]
        return Tensor(phys[:, idx])

    def _dense_fwd(self, x: Tensor, name: str) -> Tensor:
        return ops.add(ops.matmul(x, self.fusion[name + "_w"]), self.fusion[name + "_b"])

    def _hidden(self, x: Tensor, name: str, train: bool, rng) -> Tensor:
        return ops.dropout(ops.relu(self._dense_fwd(x, name)), self.hp.dropout_p, train, rng)

    def forward(
        self,
        ids_list: list[np.ndarray],
        phys: np.ndarray,
        train: bool = False,
        drop_rng: np.random.Generator | None = None,
    ) -> tuple[Tensor, Tensor]:
        """Returns (logits (B, 2), fused representation z)."""
        phys = np.asarray(phys, dtype=np.float64)
        if phys.shape != (len(ids_list), len(self.feature_names)):
            raise DataError(
                f"physiology matrix {phys.shape} vs {len(ids_list)} records x {len(self.feature_names)} features"
            )
        return self.fuse(self.encoder.encode_batch(ids_list), phys, train=train, drop_rng=drop_rng)

    def fuse(
        self,
        text: Tensor,
        phys: np.ndarray,
        train: bool = False,
        drop_rng: np.random.Generator | None = None,
    ) -> tuple[Tensor, Tensor]:
        """Fusion stage on precomputed text embeddings (n, d_model)."""
        phys = np.asarray(phys, dtype=np.float64)
        if phys.shape != (text.shape[0], len(self.feature_names)):
            raise DataError(
                f"physiology matrix {phys.shape} vs {text.shape[0]} embeddings x {len(self.feature_names)} features"
            )
        arch = self.architecture
        if arch == "BASELINE":
            x = ops.concat([text, Tensor(phys)], axis=1)
            z = self._hidden(x, "h1", train, drop_rng)
        elif arch == "THSCL":
            x = self._stage(self._dense_fwd(text, "proj"), phys, self.stage_first)
            z = self._hidden(x, "h1", train, drop_rng)
        else:
            proj = self._dense_fwd(text, "proj")
            h1 = self._hidden(self._stage(proj, phys, self.stage_first), "h1", train, drop_rng)
            z = self._hidden(self._stage(h1, phys, self.stage_second), "h2", train, drop_rng)
        return self._dense_fwd(z, "head"), z

    def _stage(self, x: Tensor, phys: np.ndarray, names: tuple[str, ...]) -> Tensor:
        if not names:
            return x
        return ops.concat([x, self._cols(phys, names)], axis=1)

    def predict_proba(self, ids_list: list[np.ndarray], phys: np.ndarray) -> np.ndarray:
        """Eval-mode class probabilities, rows summing to 1."""
        logits, _ = self.forward(ids_list, phys, train=False)
        return ops.softmax(logits).data

    def proba_from_embeddings(self, text_embs: np.ndarray, phys: np.ndarray) -> np.ndarray:
        """Eval-mode probabilities from cached text embeddings."""
        logits, _ = self.fuse(Tensor(np.asarray(text_embs, dtype=np.float64)), phys, train=False)
        return ops.softmax(logits).data
