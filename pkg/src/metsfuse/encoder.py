"""From-scratch transformer text encoder.

Token + learned position embeddings, a shared layer norm, then a stack of
post-norm blocks (multi-head self-attention, feed-forward with GELU, each
followed by residual + layer norm). Attention is masked so no query can
attend to a PAD key, and pooling averages only non-PAD states, which makes
the output exactly invariant to trailing padding.

A batch of sequences is packed into one (batch * padded_len, d_model)
matrix so embedding lookups, linear layers, and feed-forward run as a
few large array ops; only the attention products are per sequence.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from metsfuse.nn import ops
from metsfuse.nn.tensor import ShapeError, Tensor
from metsfuse.text import PAD_ID, TokenSequence, Vocabulary

_NEG_INF = -1e9


class TextEncoder:
    def __init__(
        self,
        vocab_size: int,
        rng: np.random.Generator,
        d_model: int = 32,
        n_heads: int = 2,
        n_blocks: int = 2,
        ff_dim: int = 64,
        max_len: int = 64,
        pool: str = "mean",
    ):
        if d_model % n_heads != 0:
            raise ShapeError(f"d_model {d_model} not divisible by {n_heads} heads")
        if pool not in ("mean", "cls"):
            raise ValueError(f"unknown pooling mode {pool!r}")
        self.vocab_size = vocab_size
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_blocks = n_blocks
        self.ff_dim = ff_dim
        self.max_len = max_len
        self.pool = pool
        self.params: dict[str, Tensor] = {}
        self._init(rng)

    def _add(self, name: str, data: np.ndarray) -> Tensor:
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def _init(self, rng: np.random.Generator) -> None:
        d, ff = self.d_model, self.ff_dim
        norm = lambda *shape: rng.normal(0.0, 0.02, size=shape)
        self._add("tok_emb", norm(self.vocab_size, d))
        self._add("pos_emb", norm(self.max_len, d))
        self._add("emb_ln_g", np.ones(d))
        self._add("emb_ln_b", np.zeros(d))
        for b in range(self.n_blocks):
            p = f"blk{b}."
            for w in ("wq", "wk", "wv", "wo"):
                self._add(p + w, norm(d, d))
                self._add(p + w.replace("w", "b"), np.zeros(d))
            self._add(p + "ln1_g", np.ones(d))
            self._add(p + "ln1_b", np.zeros(d))
            self._add(p + "w1", norm(d, ff))
            self._add(p + "b1", np.zeros(ff))
            self._add(p + "w2", norm(ff, d))
            self._add(p + "b2", np.zeros(d))
            self._add(p + "ln2_g", np.ones(d))
            self._add(p + "ln2_b", np.zeros(d))

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def _attention(self, x: Tensor, n_seq: int, t_pad: int, key_biases: list[Tensor], prefix: str) -> Tensor:
        p = self.params
        dk = self.d_model // self.n_heads
        scale = 1.0 / math.sqrt(dk)
        q = ops.add(ops.matmul(x, p[prefix + "wq"]), p[prefix + "bq"])
        k = ops.add(ops.matmul(x, p[prefix + "wk"]), p[prefix + "bk"])
        v = ops.add(ops.matmul(x, p[prefix + "wv"]), p[prefix + "bv"])
        rows = []
        for b in range(n_seq):
            lo, hi = b * t_pad, (b + 1) * t_pad
            qb = ops.narrow(q, 0, lo, hi)
            kb = ops.narrow(k, 0, lo, hi)
            vb = ops.narrow(v, 0, lo, hi)
            heads = []
            for h in range(self.n_heads):
                c0, c1 = h * dk, (h + 1) * dk
                scores = ops.mul(
                    ops.matmul(ops.narrow(qb, 1, c0, c1), ops.transpose(ops.narrow(kb, 1, c0, c1))),
                    scale,
                )
                attn = ops.softmax(ops.add(scores, key_biases[b]))
                heads.append(ops.matmul(attn, ops.narrow(vb, 1, c0, c1)))
            rows.append(heads[0] if self.n_heads == 1 else ops.concat(heads, axis=1))
        merged = rows[0] if n_seq == 1 else ops.concat(rows, axis=0)
        return ops.add(ops.matmul(merged, p[prefix + "wo"]), p[prefix + "bo"])

    def encode_batch(self, ids_list: list[np.ndarray], pool: str | None = None) -> Tensor:
        """Embed each id sequence to a row of a (batch, d_model) matrix.

        PAD ids may appear anywhere; they are excluded from attention keys
        and from the pooled average, so the result per row matches what a
        lone encode of that row's sequence produces.
        """
        if not ids_list:
            raise ShapeError("encode_batch: empty batch")
        seqs = []
        for ids in ids_list:
            ids = np.asarray(ids, dtype=np.int64)
            if ids.ndim != 1 or ids.size == 0:
                raise ShapeError(f"encode_batch: need non-empty 1-d id arrays, got shape {ids.shape}")
            if ids.size > self.max_len:
                raise ShapeError(f"encode_batch: {ids.size} ids exceed max_len {self.max_len}")
            seqs.append(ids)
        n_seq = len(seqs)
        t_pad = max(s.size for s in seqs)
        ids_mat = np.full((n_seq, t_pad), PAD_ID, dtype=np.int64)
        for i, s in enumerate(seqs):
            ids_mat[i, : s.size] = s
        mask = (ids_mat != PAD_ID).astype(np.float64)
        counts = mask.sum(axis=1)
        if np.any(counts == 0):
            raise ShapeError("encode_batch: a sequence is all PAD")

        p = self.params
        flat_ids = ids_mat.reshape(-1)
        pos_ids = np.tile(np.arange(t_pad, dtype=np.int64), n_seq)
        key_biases = [Tensor(np.where(mask[b] > 0, 0.0, _NEG_INF)) for b in range(n_seq)]

        x = ops.add(ops.embedding(p["tok_emb"], flat_ids), ops.embedding(p["pos_emb"], pos_ids))
        x = ops.layer_norm(x, p["emb_ln_g"], p["emb_ln_b"])
        for b in range(self.n_blocks):
            pre = f"blk{b}."
            x = ops.layer_norm(
                ops.add(x, self._attention(x, n_seq, t_pad, key_biases, pre)),
                p[pre + "ln1_g"], p[pre + "ln1_b"],
            )
            inner = ops.gelu(ops.add(ops.matmul(x, p[pre + "w1"]), p[pre + "b1"]))
            ff = ops.add(ops.matmul(inner, p[pre + "w2"]), p[pre + "b2"])
            x = ops.layer_norm(ops.add(x, ff), p[pre + "ln2_g"], p[pre + "ln2_b"])

        mode = pool or self.pool
        weights = np.zeros((n_seq, n_seq * t_pad))
        for b in range(n_seq):
            if mode == "cls":
                weights[b, b * t_pad] = 1.0
            else:
                weights[b, b * t_pad : (b + 1) * t_pad] = mask[b] / counts[b]
        return ops.matmul(Tensor(weights), x)

    def encode(self, ids: np.ndarray, pool: str | None = None) -> Tensor:
        """Single-sequence convenience wrapper; returns a (d_model,) vector."""
        out = self.encode_batch([np.asarray(ids, dtype=np.int64)], pool=pool)
        return ops.reshape(out, (self.d_model,))


def encode_text(seq: TokenSequence, enc: TextEncoder, vocab: Vocabulary, pool: str | None = None) -> Tensor:
    """Tokens to a pooled embedding; sequences past max_len are truncated."""
    if len(seq) > enc.max_len:
        warnings.warn(
            f"sequence of {len(seq)} tokens truncated to max_len {enc.max_len}",
            stacklevel=2,
        )
    ids = vocab.encode(seq, enc.max_len)
    while len(ids) > 1 and ids[-1] == PAD_ID:
        ids.pop()
    return enc.encode(np.asarray(ids, dtype=np.int64), pool=pool)
