"""Dataset synthesis, partitioning, and file loading."""

import struct

import numpy as np
import pytest

from fedvar.data import (
    Dataset,
    Partition,
    load_csv,
    load_idx,
    partition_by_label,
    partition_iid,
    synth_blobs,
)


class TestDataset:
    def test_copies_and_freezes(self):
        X = np.array([[1.0, 2.0], [3.0, 4.0]])
        y = np.array([0, 1])
        ds = Dataset(features=X, labels=y)
        X[0, 0] = 99.0
        assert ds.features[0, 0] == 1.0
        with pytest.raises(ValueError):
            ds.features[0, 0] = 5.0
        with pytest.raises(ValueError):
            ds.labels[0] = 5
        assert len(ds) == 2
        assert ds.input_dim == 2

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError):
            Dataset(features=np.zeros((3, 2)), labels=np.zeros(2))

    def test_rejects_flat_features(self):
        with pytest.raises(ValueError):
            Dataset(features=np.zeros(4), labels=np.zeros(4))


class TestPartition:
    def test_weights_proportional_to_sizes(self):
        part = Partition(shards=(np.array([0, 1, 2]), np.array([3])))
        assert part.weights == pytest.approx((0.75, 0.25))
        assert sum(part.weights) == pytest.approx(1.0, rel=1e-15)
        assert part.num_shards == 2
        assert part.min_shard_size() == 1

    def test_rejects_overlap(self):
        with pytest.raises(ValueError):
            Partition(shards=(np.array([0, 1]), np.array([1, 2])))

    def test_rejects_empty_shard(self):
        with pytest.raises(ValueError):
            Partition(shards=(np.array([0, 1]), np.array([], dtype=np.int64)))


class TestSynthBlobs:
    def test_shapes_and_class_major_order(self):
        ds = synth_blobs(num_classes=3, samples_per_class=5, input_dim=4,
                         spread=0.2, seed=0)
        assert ds.features.shape == (15, 4)
        assert np.array_equal(ds.labels,
                              np.repeat(np.arange(3, dtype=np.int64), 5))

    def test_zero_spread_reproduces_centroids(self):
        # classes 0..input_dim-1 sit on +e_c, the next input_dim on -e_c
        ds = synth_blobs(num_classes=5, samples_per_class=2, input_dim=2,
                         spread=0.0, seed=3)
        expected_first_four_classes = np.array([
            [1.0, 0.0], [1.0, 0.0],
            [0.0, 1.0], [0.0, 1.0],
            [-1.0, 0.0], [-1.0, 0.0],
            [0.0, -1.0], [0.0, -1.0],
        ])
        assert np.array_equal(ds.features[:8], expected_first_four_classes)
        # the class beyond 2*input_dim uses a seeded unit direction
        tail = ds.features[8:]
        assert np.array_equal(tail[0], tail[1])
        assert np.linalg.norm(tail[0]) == pytest.approx(1.0, rel=1e-12)

    def test_blob_means_concentrate_on_centroids(self):
        ds = synth_blobs(num_classes=2, samples_per_class=400, input_dim=3,
                         spread=0.25, seed=9)
        mean0 = ds.features[:400].mean(axis=0)
        # standard error 0.25/sqrt(400) = 0.0125; allow five of them
        assert mean0 == pytest.approx([1.0, 0.0, 0.0], abs=5 * 0.0125)

    def test_deterministic_in_seed(self):
        a = synth_blobs(3, 4, 2, 0.5, seed=7)
        b = synth_blobs(3, 4, 2, 0.5, seed=7)
        c = synth_blobs(3, 4, 2, 0.5, seed=8)
        assert np.array_equal(a.features, b.features)
        assert not np.array_equal(a.features, c.features)

    @pytest.mark.parametrize("kwargs", [
        dict(num_classes=0, samples_per_class=1, input_dim=1, spread=0.1),
        dict(num_classes=1, samples_per_class=0, input_dim=1, spread=0.1),
        dict(num_classes=1, samples_per_class=1, input_dim=0, spread=0.1),
        dict(num_classes=1, samples_per_class=1, input_dim=1, spread=-0.1),
    ])
    def test_rejects_bad_arguments(self, kwargs):
        with pytest.raises(ValueError):
            synth_blobs(seed=0, **kwargs)


class TestPartitionIid:
    def test_covers_disjointly_with_balanced_sizes(self):
        ds = synth_blobs(2, 50, 2, 0.1, seed=1)
        part = partition_iid(ds, 7, seed=2)
        sizes = [len(s) for s in part.shards]
        assert sum(sizes) == 100
        assert max(sizes) - min(sizes) <= 1
        combined = np.sort(np.concatenate(part.shards))
        assert np.array_equal(combined, np.arange(100))

    def test_shards_are_sorted_and_shuffled(self):
        ds = synth_blobs(2, 50, 2, 0.1, seed=1)
        part = partition_iid(ds, 4, seed=5)
        for shard in part.shards:
            assert np.array_equal(shard, np.sort(shard))
        # class-major data: an unshuffled split would give single-label
        # shards, so every shard holding both labels shows real mixing
        for shard in part.shards:
            assert len(np.unique(ds.labels[shard])) == 2

    def test_deterministic_in_seed(self):
        ds = synth_blobs(2, 20, 2, 0.1, seed=1)
        a = partition_iid(ds, 5, seed=3)
        b = partition_iid(ds, 5, seed=3)
        c = partition_iid(ds, 5, seed=4)
        assert all(np.array_equal(x, y)
                   for x, y in zip(a.shards, b.shards))
        assert any(not np.array_equal(x, y)
                   for x, y in zip(a.shards, c.shards))

    def test_rejects_bad_shard_counts(self):
        ds = synth_blobs(1, 5, 2, 0.1, seed=1)
        with pytest.raises(ValueError):
            partition_iid(ds, 0, seed=0)
        with pytest.raises(ValueError):
            partition_iid(ds, 6, seed=0)


class TestPartitionByLabel:
    def test_shards_follow_label_order(self):
        ds = synth_blobs(4, 25, 2, 0.1, seed=6)
        part = partition_by_label(ds, 10, seed=0)
        combined = np.concatenate([ds.labels[s] for s in part.shards])
        assert np.array_equal(combined, np.sort(ds.labels))
        sizes = [len(s) for s in part.shards]
        assert sum(sizes) == 100
        assert max(sizes) - min(sizes) <= 1

    def test_skews_label_exposure(self):
        ds = synth_blobs(4, 25, 2, 0.1, seed=6)
        part = partition_by_label(ds, 4, seed=0)
        # four shards over four equal classes: each shard sees one label
        for shard in part.shards:
            assert len(np.unique(ds.labels[shard])) == 1

    def test_deterministic_in_seed(self):
        ds = synth_blobs(3, 10, 2, 0.1, seed=2)
        a = partition_by_label(ds, 6, seed=1)
        b = partition_by_label(ds, 6, seed=1)
        assert all(np.array_equal(x, y)
                   for x, y in zip(a.shards, b.shards))


def _write_idx_pair(tmp_path, images, labels):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    images_path = tmp_path / "images.idx"
    labels_path = tmp_path / "labels.idx"
    images_path.write_bytes(
        struct.pack(">IIII", 0x00000803, n, rows, cols) + images.tobytes())
    labels_path.write_bytes(
        struct.pack(">II", 0x00000801, len(labels)) + labels.tobytes())
    return str(images_path), str(labels_path)


class TestLoadIdx:
    def test_round_trip_with_unit_scaling(self, tmp_path):
        images = np.array([[[0, 51], [102, 255]],
                           [[255, 0], [25, 50]],
                           [[1, 2], [3, 4]]], dtype=np.uint8)
        labels = np.array([7, 0, 3], dtype=np.uint8)
        ip, lp = _write_idx_pair(tmp_path, images, labels)
        ds = load_idx(ip, lp)
        assert ds.features.shape == (3, 4)
        assert ds.features == pytest.approx(
            images.reshape(3, 4).astype(np.float64) / 255.0)
        assert ds.labels.dtype == np.int64
        assert ds.labels.tolist() == [7, 0, 3]

    def test_rejects_wrong_image_magic(self, tmp_path):
        ip, lp = _write_idx_pair(tmp_path, np.zeros((1, 2, 2)), [0])
        bad = tmp_path / "bad.idx"
        payload = open(ip, "rb").read()
        bad.write_bytes(struct.pack(">I", 0x00000801) + payload[4:])
        with pytest.raises(ValueError, match="magic"):
            load_idx(str(bad), lp)

    def test_rejects_wrong_label_magic(self, tmp_path):
        ip, lp = _write_idx_pair(tmp_path, np.zeros((1, 2, 2)), [0])
        bad = tmp_path / "bad-labels.idx"
        payload = open(lp, "rb").read()
        bad.write_bytes(struct.pack(">I", 0x00000803) + payload[4:])
        with pytest.raises(ValueError, match="magic"):
            load_idx(ip, str(bad))

    def test_rejects_truncated_header(self, tmp_path):
        short = tmp_path / "short.idx"
        short.write_bytes(b"\x00\x00")
        _, lp = _write_idx_pair(tmp_path, np.zeros((1, 2, 2)), [0])
        with pytest.raises(ValueError, match="truncated"):
            load_idx(str(short), lp)

    def test_rejects_pixel_count_mismatch(self, tmp_path):
        ip, lp = _write_idx_pair(tmp_path, np.zeros((2, 2, 2)), [0, 1])
        bad = tmp_path / "trimmed.idx"
        payload = open(ip, "rb").read()
        bad.write_bytes(payload[:-1])
        with pytest.raises(ValueError, match="pixel bytes"):
            load_idx(str(bad), lp)

    def test_rejects_count_mismatch_across_files(self, tmp_path):
        ip, _ = _write_idx_pair(tmp_path, np.zeros((2, 2, 2)), [0, 1])
        _, lp_one = _write_idx_pair(_mkdir(tmp_path, "one"),
                                    np.zeros((1, 2, 2)), [0])
        with pytest.raises(ValueError, match="does not match"):
            load_idx(ip, lp_one)

    def test_error_names_the_file(self, tmp_path):
        short = tmp_path / "named.idx"
        short.write_bytes(b"")
        _, lp = _write_idx_pair(tmp_path, np.zeros((1, 2, 2)), [0])
        with pytest.raises(ValueError, match="named.idx"):
            load_idx(str(short), lp)


def _mkdir(tmp_path, name):
    sub = tmp_path / name
    sub.mkdir()
    return sub


class TestLoadCsv:
    def test_round_trip_with_interior_label_column(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("x1,label,x2\n"
                        "1.5,0,2.5\n"
                        "-0.5,1,3.25\n")
        ds = load_csv(str(path), "label")
        assert ds.features == pytest.approx(
            np.array([[1.5, 2.5], [-0.5, 3.25]]))
        assert ds.labels.dtype == np.int64
        assert ds.labels.tolist() == [0, 1]

    def test_fractional_labels_stay_float(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,label\n1,0.5\n2,1.5\n")
        ds = load_csv(str(path), "label")
        assert ds.labels.dtype == np.float64
        assert ds.labels.tolist() == [0.5, 1.5]

    def test_rejects_missing_label_column(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="no column named 'target'"):
            load_csv(str(path), "target")

    def test_rejects_ragged_row_with_row_number(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,label\n1,0\n2\n")
        with pytest.raises(ValueError, match="row 3"):
            load_csv(str(path), "label")

    def test_rejects_non_numeric_cell_with_location(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,label\n1,0\noops,1\n")
        with pytest.raises(ValueError, match=r"row 3, column 'a'"):
            load_csv(str(path), "label")

    def test_rejects_empty_file(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("")
        with pytest.raises(ValueError, match="empty"):
            load_csv(str(path), "label")

    def test_rejects_header_only(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,label\n")
        with pytest.raises(ValueError, match="no data rows"):
            load_csv(str(path), "label")
