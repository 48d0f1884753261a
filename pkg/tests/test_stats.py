import itertools

import numpy as np
import pytest

from klda.batch import FeatureBatch
from klda.errors import (
    CrcMismatch,
    DataError,
    DimensionError,
    ProtocolError,
    TruncatedFile,
)
from klda.stats import GaussianAccumulator

from _oracles import pooled_covariance


def make_class_rows(num_classes=3, per_class=50, dim=32, seed=0):
    rng = np.random.default_rng(seed)
    out = {}
    for cid in range(num_classes):
        center = rng.standard_normal(dim) * 2.0
        out[cid] = center + rng.standard_normal((per_class, dim))
    return out


def accumulate(per_class_rows, order=None):
    dim = next(iter(per_class_rows.values())).shape[1]
    acc = GaussianAccumulator(dim)
    for cid in order if order is not None else sorted(per_class_rows):
        rows = per_class_rows[cid]
        acc.update_class(FeatureBatch(rows, np.full(len(rows), cid)), cid)
    return acc


class TestUpdateClass:
    def test_single_point_class(self):
        acc = GaussianAccumulator(4)
        row = np.array([[1.0, 2.0, 3.0, 4.0]])
        acc.update_class(FeatureBatch(row, np.array([7])), 7)
        np.testing.assert_array_equal(acc.class_means[7], row[0])
        np.testing.assert_array_equal(acc.covariance, np.zeros((4, 4)))
        assert acc.total_count == 1
        assert acc.per_class_counts == {7: 1}

    def test_matches_batch_oracle(self):
        rows = make_class_rows(num_classes=3, per_class=50, dim=32, seed=3)
        acc = accumulate(rows)
        means, sigma, total = pooled_covariance(rows)
        assert acc.total_count == total
        for cid, mu in means.items():
            np.testing.assert_allclose(acc.class_means[cid], mu, rtol=1e-12)
        # atol is the float64 noise floor for unit-scale entries
        np.testing.assert_allclose(acc.covariance, sigma, rtol=1e-10, atol=1e-13)

    def test_order_invariance(self):
        rows = make_class_rows(num_classes=4, per_class=30, dim=16, seed=5)
        reference = accumulate(rows, order=[0, 1, 2, 3])
        for order in ([3, 2, 1, 0], [1, 3, 0, 2]):
            other = accumulate(rows, order=order)
            np.testing.assert_allclose(
                other.covariance, reference.covariance, rtol=1e-10, atol=1e-13
            )
            assert other.total_count == reference.total_count

    def test_two_class_orders_match_oracle(self):
        rows = make_class_rows(num_classes=2, per_class=25, dim=8, seed=11)
        _, sigma, _ = pooled_covariance(rows)
        for order in itertools.permutations(rows):
            acc = accumulate(rows, order=list(order))
            np.testing.assert_allclose(acc.covariance, sigma, rtol=1e-10, atol=1e-13)

    def test_duplicate_class_rejected(self):
        acc = GaussianAccumulator(3)
        batch = FeatureBatch(np.ones((2, 3)), np.array([1, 1]))
        acc.update_class(batch, 1)
        with pytest.raises(ProtocolError):
            acc.update_class(batch, 1)

    def test_width_mismatch_rejected(self):
        acc = GaussianAccumulator(3)
        with pytest.raises(DimensionError):
            acc.update_class(FeatureBatch(np.ones((2, 4)), np.array([0, 0])), 0)

    def test_empty_batch_rejected(self):
        acc = GaussianAccumulator(3)
        with pytest.raises(DataError):
            acc.update_class(FeatureBatch(np.empty((0, 3)), np.empty(0, dtype=int)), 0)

    def test_foreign_labels_rejected(self):
        acc = GaussianAccumulator(3)
        with pytest.raises(DataError):
            acc.update_class(FeatureBatch(np.ones((2, 3)), np.array([0, 1])), 0)

    def test_scatter_additivity(self):
        # N*sigma is the sum of per-class scatters; adding a class leaves
        # previously accumulated scatter untouched
        rows = make_class_rows(num_classes=3, per_class=20, dim=10, seed=9)
        acc = GaussianAccumulator(10)
        running = np.zeros((10, 10))
        for cid in sorted(rows):
            centered = rows[cid] - rows[cid].mean(axis=0)
            acc.update_class(FeatureBatch(rows[cid], np.full(20, cid)), cid)
            running += centered.T @ centered
            np.testing.assert_allclose(
                acc.total_count * acc.covariance, running, rtol=1e-10, atol=1e-12
            )

    def test_positive_semidefinite(self):
        rows = make_class_rows(num_classes=5, per_class=8, dim=24, seed=13)
        acc = accumulate(rows)
        eigs = np.linalg.eigvalsh(acc.covariance)
        assert eigs.min() >= -1e-8 * eigs.max()

    def test_symmetry_enforced(self):
        rows = make_class_rows(num_classes=3, per_class=40, dim=12, seed=17)
        acc = accumulate(rows)
        assert np.array_equal(acc.covariance, acc.covariance.T)


class TestSnapshot:
    def test_single_entry_after_first_update(self):
        acc = GaussianAccumulator(2)
        acc.update_class(FeatureBatch(np.ones((3, 2)), np.zeros(3, dtype=int)), 0)
        snap = acc.snapshot()
        assert list(snap.means) == [0]
        assert snap.counts == {0: 3}

    def test_snapshot_is_isolated_from_updates(self):
        rows = make_class_rows(num_classes=2, per_class=10, dim=4, seed=2)
        acc = accumulate(rows, order=[0])
        snap = acc.snapshot()
        cov_before = snap.covariance.copy()
        means_before = {c: m.copy() for c, m in snap.means.items()}
        acc.update_class(FeatureBatch(rows[1], np.full(10, 1)), 1)
        np.testing.assert_array_equal(snap.covariance, cov_before)
        assert list(snap.means) == [0]
        np.testing.assert_array_equal(snap.means[0], means_before[0])

    def test_snapshot_readonly(self):
        acc = GaussianAccumulator(2)
        acc.update_class(FeatureBatch(np.ones((3, 2)), np.zeros(3, dtype=int)), 0)
        snap = acc.snapshot()
        with pytest.raises(ValueError):
            snap.covariance[0, 0] = 5.0

    def test_snapshot_symmetric(self):
        rows = make_class_rows(num_classes=4, per_class=25, dim=16, seed=21)
        snap = accumulate(rows).snapshot()
        asym = np.abs(snap.covariance - snap.covariance.T).max()
        assert asym <= 1e-12 * np.abs(snap.covariance).max()

    def test_empty_accumulator_rejected(self):
        with pytest.raises(ProtocolError):
            GaussianAccumulator(4).snapshot()


class TestSerialization:
    def test_roundtrip_bit_exact(self):
        rows = make_class_rows(num_classes=3, per_class=15, dim=6, seed=31)
        acc = accumulate(rows)
        clone = GaussianAccumulator.deserialize(acc.serialize())
        assert clone.dim == acc.dim
        assert clone.total_count == acc.total_count
        assert clone.per_class_counts == acc.per_class_counts
        assert list(clone.class_means) == list(acc.class_means)
        for cid in acc.class_means:
            assert np.array_equal(clone.class_means[cid], acc.class_means[cid])
        assert np.array_equal(clone.covariance, acc.covariance)

    def test_truncated_stream_rejected(self):
        acc = accumulate(make_class_rows(2, 5, 4, seed=1))
        blob = acc.serialize()
        with pytest.raises(TruncatedFile):
            GaussianAccumulator.deserialize(blob[:-9])

    def test_corrupted_stream_rejected(self):
        acc = accumulate(make_class_rows(2, 5, 4, seed=1))
        blob = bytearray(acc.serialize())
        blob[30] ^= 0x42
        with pytest.raises(CrcMismatch):
            GaussianAccumulator.deserialize(bytes(blob))

    def test_continuation_equivalence(self):
        # serialize/deserialize mid-stream, keep updating: identical to an
        # uninterrupted accumulation, bit for bit
        rows = make_class_rows(num_classes=4, per_class=12, dim=8, seed=41)
        direct = accumulate(rows, order=[0, 1, 2, 3])
        resumed = accumulate(rows, order=[0, 1])
        resumed = GaussianAccumulator.deserialize(resumed.serialize())
        for cid in (2, 3):
            resumed.update_class(FeatureBatch(rows[cid], np.full(12, cid)), cid)
        assert np.array_equal(resumed.covariance, direct.covariance)
        assert resumed.per_class_counts == direct.per_class_counts
        for cid in direct.class_means:
            assert np.array_equal(resumed.class_means[cid], direct.class_means[cid])

    def test_file_roundtrip(self, tmp_path):
        acc = accumulate(make_class_rows(2, 5, 4, seed=1))
        path = tmp_path / "state.kacc"
        acc.save(path)
        clone = GaussianAccumulator.load(path)
        assert np.array_equal(clone.covariance, acc.covariance)
