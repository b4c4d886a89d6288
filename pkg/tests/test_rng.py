"""Derived random streams: determinism and path separation."""

import zlib

import numpy as np

from metsfuse.rng import derived_rng


def draw(rng, n=8):
    return rng.random(n)


class TestDerivedRng:
    def test_same_path_same_stream(self):
        a = draw(derived_rng(0, "init"))
        b = draw(derived_rng(0, "init"))
        np.testing.assert_array_equal(a, b)

    def test_different_seed_differs(self):
        assert not np.array_equal(draw(derived_rng(0, "init")), draw(derived_rng(1, "init")))

    def test_path_components_separate_streams(self):
        streams = [
            draw(derived_rng(0)),
            draw(derived_rng(0, "init")),
            draw(derived_rng(0, "shuffle", 1)),
            draw(derived_rng(0, "shuffle", 2)),
            draw(derived_rng(0, "dropout", 1, 1)),
            draw(derived_rng(0, "dropout", 1, 2)),
        ]
        for i in range(len(streams)):
            for j in range(i + 1, len(streams)):
                assert not np.array_equal(streams[i], streams[j])

    def test_consumption_does_not_couple_streams(self):
        # drawing from one stream never shifts another
        rng = derived_rng(5, "a")
        rng.random(1000)
        np.testing.assert_array_equal(draw(derived_rng(5, "b")), draw(derived_rng(5, "b")))

    def test_string_labels_hash_by_crc32(self):
        label = "shuffle"
        np.testing.assert_array_equal(
            draw(derived_rng(3, label)), draw(derived_rng(3, zlib.crc32(label.encode())))
        )

    def test_int_labels_wrap_to_32_bits(self):
        np.testing.assert_array_equal(
            draw(derived_rng(0, 2**32 + 7)), draw(derived_rng(0, 7))
        )

    def test_returns_independent_generator_objects(self):
        a = derived_rng(0, "x")
        b = derived_rng(0, "x")
        assert a is not b
        a.random(4)
        np.testing.assert_array_equal(b.random(4), derived_rng(0, "x").random(4))
