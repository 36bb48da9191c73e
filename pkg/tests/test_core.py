import numpy as np
import pytest

from robest import (
    BlockPartition,
    InvalidArgumentError,
    MedianConvention,
    RngContract,
    ScalarSample,
    VectorSample,
    block_means,
    median,
    partition_blocks,
)


class TestPartitionBlocks:
    def test_contiguous_six_three(self):
        part = partition_blocks(6, 3)
        assert part.blocks.tolist() == [[0, 1], [2, 3], [4, 5]]
        assert part.covered == 6

    def test_remainder_dropped(self):
        part = partition_blocks(7, 3)
        assert part.blocks.tolist() == [[0, 1], [2, 3], [4, 5]]
        assert part.covered == 6
        assert 6 not in part.blocks

    def test_single_block(self):
        part = partition_blocks(6, 1)
        assert part.blocks.tolist() == [[0, 1, 2, 3, 4, 5]]

    @pytest.mark.parametrize("n,k", [(10, 0), (10, 11), (5, -1)])
    def test_invalid_k(self, n, k):
        with pytest.raises(InvalidArgumentError):
            partition_blocks(n, k)

    def test_seeded_shuffle_deterministic(self):
        a = partition_blocks(100, 7, seed=42)
        b = partition_blocks(100, 7, seed=42)
        c = partition_blocks(100, 7, seed=43)
        assert np.array_equal(a.blocks, b.blocks)
        assert not np.array_equal(a.blocks, c.blocks)

    @pytest.mark.parametrize("n,k,seed", [(100, 7, 3), (64, 8, None), (13, 5, 9)])
    def test_disjoint_equal_sizes(self, n, k, seed):
        part = partition_blocks(n, k, seed)
        flat = part.blocks.ravel()
        assert np.unique(flat).size == flat.size
        assert part.blocks.shape == (k, n // k)
        assert np.all(np.diff(part.blocks, axis=1) > 0)  # rows sorted

    def test_overlapping_blocks_rejected(self):
        with pytest.raises(Exception):
            BlockPartition(k=2, blocks=np.array([[0, 1], [1, 2]]))


class TestMedian:
    def test_odd(self):
        assert median([3, 1, 2]) == 2

    def test_even_conventions(self):
        vals = [1, 2, 3, 4]
        assert median(vals, MedianConvention.MIDPOINT) == 2.5
        assert median(vals, MedianConvention.LOWER) == 2
        assert median(vals, MedianConvention.UPPER) == 3

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            median([])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            vals = rng.normal(size=rng.integers(1, 12))
            assert median(vals) == median(rng.permutation(vals))

    def test_monotone_in_single_value(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            vals = rng.normal(size=rng.integers(1, 10))
            i = rng.integers(0, vals.size)
            bumped = vals.copy()
            bumped[i] += abs(rng.normal()) + 0.1
            assert median(bumped) >= median(vals)


class TestBlockMeans:
    def test_hand_example(self):
        part = partition_blocks(6, 3)
        np.testing.assert_allclose(block_means([1, 2, 3, 4, 5, 6], part), [1.5, 3.5, 5.5])

    def test_constant(self):
        part = partition_blocks(9, 3)
        np.testing.assert_array_equal(block_means([7.0] * 9, part), [7.0, 7.0, 7.0])

    def test_vector_single_block(self):
        part = partition_blocks(2, 1)
        means = block_means(VectorSample(np.array([[0.0, 0.0], [2.0, 2.0]])), part)
        np.testing.assert_array_equal(means, [[1.0, 1.0]])

    def test_affine_equivariance(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=20)
        part = partition_blocks(20, 4, seed=5)
        a, b = 2.5, -1.25
        np.testing.assert_allclose(
            block_means(a * x + b, part), a * block_means(x, part) + b, atol=1e-12
        )


class TestSamples:
    def test_scalar_validation(self):
        with pytest.raises(InvalidArgumentError):
            ScalarSample(np.array([1.0, np.inf]))
        with pytest.raises(InvalidArgumentError):
            ScalarSample(np.array([]))

    def test_vector_shape(self):
        v = VectorSample(np.arange(6.0).reshape(3, 2))
        assert (v.n, v.dim) == (3, 2)
        with pytest.raises(InvalidArgumentError):
            VectorSample(np.array([[1.0], [np.nan]]))

    def test_caller_array_not_frozen(self):
        arr = np.array([1.0, 2.0, 3.0])
        ScalarSample(arr)
        arr[0] = 9.0  # still writable


class TestRngContract:
    def test_reproducible_streams(self):
        a = RngContract(7).stream("x", 3).standard_normal(4)
        b = RngContract(7).stream("x", 3).standard_normal(4)
        np.testing.assert_array_equal(a, b)

    def test_labels_and_indices_distinct(self):
        base = RngContract(7).stream("x", 0).standard_normal(4)
        other_label = RngContract(7).stream("y", 0).standard_normal(4)
        other_index = RngContract(7).stream("x", 1).standard_normal(4)
        assert not np.array_equal(base, other_label)
        assert not np.array_equal(base, other_index)
