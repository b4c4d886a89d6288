import numpy as np
import pytest

from metsfuse.encoder import TextEncoder, encode_text
from metsfuse.nn.tensor import ShapeError
from metsfuse.rng import derived_rng
from metsfuse.text import Vocabulary, tokenize

VOCAB_TEXTS = ["walked around the block slowly", "ran fast felt breathless", "swam and rested"]


def _enc(**kw):
    args = dict(d_model=16, n_heads=2, n_blocks=2, ff_dim=24, max_len=12)
    args.update(kw)
    vocab = Vocabulary.build(VOCAB_TEXTS)
    enc = TextEncoder(len(vocab), derived_rng(0, "init"), **args)
    return enc, vocab


def test_embedding_shape_and_determinism():
    enc1, vocab = _enc()
    enc2, _ = _enc()
    out1 = encode_text(tokenize("walked slowly"), enc1, vocab)
    out2 = encode_text(tokenize("walked slowly"), enc2, vocab)
    assert out1.shape == (16,)
    np.testing.assert_array_equal(out1.data, out2.data)


def test_batch_matches_single_sequence_encoding():
    enc, vocab = _enc()
    texts = ["walked around the block", "ran fast", "swam and rested slowly"]
    id_lists = [np.asarray(vocab.encode(tokenize(t), 8), dtype=np.int64) for t in texts]
    batch = enc.encode_batch(id_lists).data
    for i, ids in enumerate(id_lists):
        solo = enc.encode(ids).data
        np.testing.assert_allclose(batch[i], solo, atol=1e-12)


def test_padding_does_not_change_embedding():
    enc, vocab = _enc()
    seq = tokenize("ran fast felt breathless")
    bare = np.asarray([vocab.token_to_id.get(t, 1) for t in seq.tokens], dtype=np.int64)
    padded = np.concatenate([bare, np.zeros(5, dtype=np.int64)])
    a = enc.encode(bare).data
    b = enc.encode(padded).data
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_mean_and_cls_pooling_differ():
    enc, vocab = _enc()
    ids = np.asarray(vocab.encode(tokenize("walked around"), 6), dtype=np.int64)
    mean = enc.encode(ids, pool="mean").data
    cls = enc.encode(ids, pool="cls").data
    assert not np.allclose(mean, cls)


def test_token_order_matters():
    enc, vocab = _enc()
    a = encode_text(tokenize("walked slowly around"), enc, vocab).data
    b = encode_text(tokenize("around slowly walked"), enc, vocab).data
    assert not np.allclose(a, b)


def test_long_sequence_truncates_with_warning():
    enc, vocab = _enc(max_len=4)
    with pytest.warns(UserWarning, match="truncated"):
        out = encode_text(tokenize("walked around the block slowly and rested"), enc, vocab)
    assert out.shape == (16,)


def test_head_divisibility_enforced():
    vocab = Vocabulary.build(VOCAB_TEXTS)
    with pytest.raises(ShapeError):
        TextEncoder(len(vocab), derived_rng(0, "init"), d_model=15, n_heads=2)


def test_unknown_pool_mode_rejected():
    vocab = Vocabulary.build(VOCAB_TEXTS)
    with pytest.raises(ValueError):
        TextEncoder(len(vocab), derived_rng(0, "init"), pool="max")


def test_parameter_count_scales_with_blocks():
    enc1, _ = _enc(n_blocks=1)
    enc2, _ = _enc(n_blocks=2)
    n1 = sum(p.size for p in enc1.parameters())
    n2 = sum(p.size for p in enc2.parameters())
    per_block = n2 - n1
    d, ff = 16, 24
    # 4 projections with biases, 2 layer norms, 2 feed-forward mats
    assert per_block == 4 * (d * d + d) + 2 * 2 * d + (d * ff + ff) + (ff * d + d)
