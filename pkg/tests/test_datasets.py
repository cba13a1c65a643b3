import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icsplit.datasets import (NEGATIVE, POSITIVE, DatasetFormatError, ImageSet, load_cifar10,
                              load_csv, load_idx, make_experiment, minmax_scale, write_cifar10,
                              write_csv, write_idx)

from conftest import MNIST_DIR, mnist_available


def _idx_bytes(n, h, w, payload):
    return struct.pack(">IIII", 0x803, n, h, w) + payload


class TestIdx:
    def test_header_driven_shape(self, tmp_path):
        p = tmp_path / "img"
        p.write_bytes(_idx_bytes(4, 28, 28, bytes(range(256)) * 12 + bytes(4 * 784 - 3072)))
        s = load_idx(p)
        assert len(s) == 4
        assert s.shape == (28, 28, 1)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "img"
        p.write_bytes(_idx_bytes(4, 28, 28, bytes(4 * 784 - 1)))
        with pytest.raises(DatasetFormatError, match="truncated"):
            load_idx(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "img"
        p.write_bytes(struct.pack(">IIII", 0x801, 1, 2, 2) + bytes(4))
        with pytest.raises(DatasetFormatError, match="magic"):
            load_idx(p)

    def test_count_mismatch(self, tmp_path, rng):
        imgs = rng.integers(0, 256, (3, 5, 5), dtype=np.uint8)
        write_idx(imgs, [1, 2, 3, 4], tmp_path / "i", tmp_path / "l")
        with pytest.raises(DatasetFormatError, match="count mismatch"):
            load_idx(tmp_path / "i", tmp_path / "l")

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(1, 6), h=st.integers(1, 9), w=st.integers(1, 9), seed=st.integers(0, 999))
    def test_round_trip(self, tmp_path_factory, n, h, w, seed):
        d = tmp_path_factory.mktemp("idx")
        r = np.random.default_rng(seed)
        imgs = r.integers(0, 256, (n, h, w), dtype=np.uint8)
        labels = r.integers(0, 10, n)
        write_idx(imgs, labels, d / "i", d / "l")
        s = load_idx(d / "i", d / "l")
        np.testing.assert_array_equal(s.images[..., 0], imgs)
        np.testing.assert_array_equal(s.labels, labels)

    @pytest.mark.skipif(not mnist_available(), reason="MNIST files not present")
    def test_real_mnist_shape(self):
        s = load_idx(MNIST_DIR / "t10k-images.idx3-ubyte", MNIST_DIR / "t10k-labels.idx1-ubyte")
        assert s.shape == (28, 28, 1)
        assert len(s) == 10000


class TestCifar:
    def test_single_record(self, tmp_path):
        p = tmp_path / "b.bin"
        p.write_bytes(bytes([3]) + bytes([128]) * 3072)
        s = load_cifar10(p)
        assert len(s) == 1 and s.labels[0] == 3
        assert s.shape == (32, 32, 3)
        assert np.all(s.images == 128)

    def test_missing_label_byte(self, tmp_path):
        p = tmp_path / "b.bin"
        p.write_bytes(bytes(3072))
        with pytest.raises(DatasetFormatError):
            load_cifar10(p)

    def test_label_out_of_range(self, tmp_path):
        p = tmp_path / "b.bin"
        p.write_bytes(bytes([10]) + bytes(3072))
        with pytest.raises(DatasetFormatError, match="label"):
            load_cifar10(p)

    def test_round_trip_channel_planar(self, tmp_path, rng):
        imgs = rng.integers(0, 256, (5, 32, 32, 3), dtype=np.uint8)
        labels = rng.integers(0, 10, 5)
        write_cifar10(imgs, labels, tmp_path / "b.bin")
        raw = (tmp_path / "b.bin").read_bytes()
        # first pixel byte of record 0 is red channel at (0, 0)
        assert raw[1] == imgs[0, 0, 0, 0] and raw[1 + 1024] == imgs[0, 0, 0, 1]
        s = load_cifar10([tmp_path / "b.bin", tmp_path / "b.bin"])
        np.testing.assert_array_equal(s.images[:5], imgs)
        np.testing.assert_array_equal(s.labels[5:], labels)


class TestCsv:
    def test_round_trip(self, tmp_path, rng):
        s = ImageSet(rng.random((4, 3, 3, 1)), np.array([0, 1, 2, 3]))
        write_csv(s, tmp_path / "f.csv")
        back = load_csv(tmp_path / "f.csv", (3, 3, 1))
        np.testing.assert_array_equal(back.images, s.images)
        np.testing.assert_array_equal(back.labels, s.labels)

    def test_wrong_width(self, tmp_path):
        (tmp_path / "f.csv").write_text("1,0.5,0.5\n")
        with pytest.raises(DatasetFormatError):
            load_csv(tmp_path / "f.csv", (2, 2, 1))


class TestMinmax:
    def test_values(self):
        s = ImageSet(np.array([0, 51, 255], dtype=np.uint8).reshape(3, 1, 1, 1), np.zeros(3))
        out = minmax_scale(s).images.ravel()
        np.testing.assert_allclose(out, [0.0, 0.2, 1.0], atol=1e-7)

    def test_constant_corpus(self):
        s = ImageSet(np.full((2, 2, 2, 1), 7, dtype=np.uint8), np.zeros(2))
        assert np.all(minmax_scale(s).images == 0.0)

    def test_corpus_wide_not_per_image(self):
        imgs = np.array([[0, 100], [50, 200]], dtype=np.uint8).reshape(2, 1, 2, 1)
        out = minmax_scale(ImageSet(imgs, np.zeros(2))).images
        assert out[0].max() == pytest.approx(0.5)


def _toy_set(rng, per_class=30, n_classes=4):
    labels = np.repeat(np.arange(n_classes), per_class)
    imgs = rng.random((len(labels), 4, 4, 1)).astype(np.float32)
    return ImageSet(imgs, labels)


class TestMakeExperiment:
    def test_train_is_normal_only(self, rng):
        s = _toy_set(rng)
        sp = make_experiment(s, normal_class=2, n_train=20, seed=0)
        assert len(sp.train) == 20
        assert np.all(s.labels[sp.train_index] == 2)
        # leftover normal + all abnormal
        assert np.sum(sp.test_labels == NEGATIVE) == 10
        assert np.sum(sp.test_labels == POSITIVE) == 90
        assert set(np.unique(sp.test_labels)) <= {NEGATIVE, POSITIVE}
        assert np.all((sp.test_classes == 2) == (sp.test_labels == NEGATIVE))

    def test_validation_fraction(self, rng):
        sp = make_experiment(_toy_set(rng), 1, 20, seed=3)
        assert sp.val_mask.sum() == round(0.2 * len(sp.test))
        assert len(sp.evaluation[0]) + len(sp.validation[0]) == len(sp.test)

    def test_deterministic(self, rng):
        s = _toy_set(rng)
        a = make_experiment(s, 0, 15, seed=7)
        b = make_experiment(s, 0, 15, seed=7)
        c = make_experiment(s, 0, 15, seed=8)
        np.testing.assert_array_equal(a.train_index, b.train_index)
        np.testing.assert_array_equal(a.test_index, b.test_index)
        np.testing.assert_array_equal(a.val_mask, b.val_mask)
        assert not np.array_equal(a.train_index, c.train_index)

    def test_insufficient_normal(self, rng):
        with pytest.raises(ValueError, match="requested"):
            make_experiment(_toy_set(rng), 0, 31, seed=0)

    def test_separate_test_pool_and_counts(self, rng):
        train, test = _toy_set(rng), _toy_set(rng, per_class=10)
        sp = make_experiment(train, 3, 30, seed=1, test_set=test, n_test_normal=5,
                             n_test_abnormal=9)
        assert np.sum(sp.test_labels == NEGATIVE) == 5
        assert np.sum(sp.test_labels == POSITIVE) == 9
        assert np.all(test.labels[sp.test_index][sp.test_labels == NEGATIVE] == 3)

    @settings(max_examples=30, deadline=None)
    @given(normal=st.integers(0, 3), n_train=st.integers(1, 30), seed=st.integers(0, 10 ** 6))
    def test_no_abnormal_in_train(self, normal, n_train, seed):
        s = _toy_set(np.random.default_rng(seed))
        sp = make_experiment(s, normal, n_train, seed)
        assert np.all(s.labels[sp.train_index] == normal)
        assert len(np.intersect1d(sp.train_index, sp.test_index)) == 0
