import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from orbitpool.core import (
    BinaryHash,
    Descriptor,
    FeatureOrbitTensor,
    euclidean_distance,
    hamming_distance,
    l2_normalize,
    pack_bits,
)


def desc(*values):
    return Descriptor(np.asarray(values, dtype=np.float32))


class TestL2Normalize:
    def test_three_four_five(self):
        out = l2_normalize(desc(3.0, 4.0))
        np.testing.assert_allclose(out.values, [0.6, 0.8], rtol=1e-6)
        assert out.normalized

    def test_already_unit(self):
        out = l2_normalize(desc(1.0, 0.0, 0.0))
        np.testing.assert_array_equal(out.values, [1.0, 0.0, 0.0])
        assert out.normalized

    def test_zero_vector_flagged(self):
        out = l2_normalize(desc(0.0, 0.0))
        np.testing.assert_array_equal(out.values, [0.0, 0.0])
        assert not out.normalized

    def test_direction_preserved(self):
        rng = np.random.default_rng(4)
        v = rng.normal(size=17).astype(np.float32)
        out = l2_normalize(Descriptor(v))
        cos = float(np.dot(out.values, v) / (np.linalg.norm(v)))
        assert cos == pytest.approx(1.0, abs=1e-6)

    @given(st.lists(st.floats(-1e6, 1e6, width=32), min_size=1, max_size=64))
    def test_idempotent(self, values):
        d = Descriptor(np.asarray(values, dtype=np.float32))
        once = l2_normalize(d)
        twice = l2_normalize(once)
        assert np.max(np.abs(twice.values - once.values)) <= 1e-6

    def test_normalized_flag_validated(self):
        with pytest.raises(ValueError, match="norm"):
            Descriptor(np.array([3.0, 4.0], dtype=np.float32), normalized=True)


class TestEuclideanDistance:
    def test_three_four_five(self):
        assert euclidean_distance(desc(0.0, 0.0), desc(3.0, 4.0)) == pytest.approx(5.0)

    def test_identity(self):
        d = desc(1.5, -2.5, 3.0)
        assert euclidean_distance(d, d) == 0.0

    def test_hand_computed_sqrt5(self):
        # sqrt((2-1)^2 + (3-1)^2) = sqrt(5)
        assert euclidean_distance(desc(1.0, 1.0), desc(2.0, 3.0)) == pytest.approx(
            2.23606797749979, abs=1e-9
        )

    def test_dim_mismatch_names_both(self):
        with pytest.raises(ValueError, match="2 vs 3"):
            euclidean_distance(desc(1.0, 2.0), desc(1.0, 2.0, 3.0))

    def test_triangle_inequality_on_random_triples(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            a, b, c = (Descriptor(rng.normal(size=24).astype(np.float32)) for _ in range(3))
            ab = euclidean_distance(a, b)
            bc = euclidean_distance(b, c)
            ac = euclidean_distance(a, c)
            assert ac <= (ab + bc) * (1 + 1e-6)


def bits_hash(bit_string: str) -> BinaryHash:
    return pack_bits(np.array([ch == "1" for ch in bit_string]))


class TestHammingDistance:
    def test_small_example(self):
        assert hamming_distance(bits_hash("1010"), bits_hash("0110")) == 2

    def test_identity(self):
        h = bits_hash("100111010")
        assert hamming_distance(h, h) == 0

    def test_complement_512(self):
        ones = pack_bits(np.ones(512, dtype=bool))
        zeros = pack_bits(np.zeros(512, dtype=bool))
        assert hamming_distance(ones, zeros) == 512

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            hamming_distance(bits_hash("10"), bits_hash("101"))

    @given(st.binary(min_size=1, max_size=512), st.binary(min_size=1, max_size=512), st.data())
    def test_matches_naive_bit_loop(self, raw_a, raw_b, data):
        n_bytes = min(len(raw_a), len(raw_b))
        n_bits = data.draw(st.integers(max(1, (n_bytes - 1) * 8 + 1), n_bytes * 8))
        a = np.frombuffer(raw_a[:n_bytes], dtype=np.uint8)
        b = np.frombuffer(raw_b[:n_bytes], dtype=np.uint8)
        flags_a = np.unpackbits(a, bitorder="little")[:n_bits]
        flags_b = np.unpackbits(b, bitorder="little")[:n_bits]
        ha, hb = pack_bits(flags_a), pack_bits(flags_b)
        naive = sum(1 for x, y in zip(flags_a.tolist(), flags_b.tolist()) if x != y)
        assert hamming_distance(ha, hb) == naive


class TestContainers:
    def test_pack_unpack_round_trip(self):
        rng = np.random.default_rng(3)
        flags = rng.random(77) > 0.5
        np.testing.assert_array_equal(pack_bits(flags).unpack(), flags)

    def test_hash_rejects_nonzero_pad_bits(self):
        with pytest.raises(ValueError, match="pad bits"):
            BinaryHash(np.array([0xFF], dtype=np.uint8), n_bits=4)

    def test_hash_rejects_wrong_byte_count(self):
        with pytest.raises(ValueError, match="bytes"):
            BinaryHash(np.array([0, 0], dtype=np.uint8), n_bits=4)

    def test_descriptor_dims(self):
        assert desc(1.0, 2.0, 3.0).dims == 3

    def test_tensor_rejects_non_finite(self):
        data = np.zeros((1, 1, 2, 2, 2), dtype=np.float32)
        data[0, 0, 0, 0, 0] = math.nan
        with pytest.raises(ValueError, match="finite"):
            FeatureOrbitTensor(data)

    def test_tensor_requires_five_axes(self):
        with pytest.raises(ValueError, match="5 axes"):
            FeatureOrbitTensor(np.zeros((2, 2, 2), dtype=np.float32))

    def test_tensor_axis_sizes(self):
        t = FeatureOrbitTensor(np.zeros((2, 3, 4, 5, 6), dtype=np.float32))
        assert (t.n_rot, t.n_scale, t.channels, t.height, t.width) == (2, 3, 4, 5, 6)
