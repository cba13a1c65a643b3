import numpy as np
import pytest

from icsplit.datasets import ImageSet, make_experiment
from icsplit.experiment import (OcsvmConfig, evaluate_features, featurize, read_feature_csv,
                                run_cell, write_feature_csv)
from icsplit.pipeline import TrainConfig


@pytest.fixture(scope="module")
def blobs():
    """Two well-separated Gaussian classes rendered as 1x2 'images'."""
    r = np.random.default_rng(5)
    labels = np.repeat([0, 1, 2], 200)
    centers = np.array([[0.2, 0.2], [0.8, 0.8], [0.2, 0.8]])
    x = centers[labels] + r.normal(0, 0.03, (600, 2))
    return ImageSet(x.reshape(600, 1, 2, 1), labels)


def test_feature_csv_round_trip(tmp_path, rng):
    f, y = rng.standard_normal((4, 3)), np.array([0, 1, 1, 0])
    write_feature_csv(tmp_path / "f.csv", f, y)
    f2, y2 = read_feature_csv(tmp_path / "f.csv")
    np.testing.assert_array_equal(f2, f)
    np.testing.assert_array_equal(y2, y)


def test_feature_csv_label_anywhere(tmp_path):
    (tmp_path / "f.csv").write_text("a,label,b\n1.5,3,2.5\n")
    f, y = read_feature_csv(tmp_path / "f.csv")
    np.testing.assert_array_equal(f, [[1.5, 2.5]])
    assert y.tolist() == [3]
    (tmp_path / "g.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="label"):
        read_feature_csv(tmp_path / "g.csv")


def test_separable_blobs_score_high(blobs):
    split = make_experiment(blobs, 0, n_train=150, seed=0, n_test_normal=40, n_test_abnormal=200)
    res = run_cell("original", split, TrainConfig(), OcsvmConfig(gamma=20.0))
    assert res.bacc > 0.95


def test_zero_threshold_mode(blobs):
    split = make_experiment(blobs, 0, n_train=150, seed=0, n_test_normal=40, n_test_abnormal=200)
    tr, te = featurize("original", split, TrainConfig())
    res = evaluate_features(tr, te, split, OcsvmConfig(gamma=20.0, threshold="zero"))
    assert res.threshold == 0.0
    with pytest.raises(ValueError):
        evaluate_features(tr, te, split, OcsvmConfig(threshold="median"))


def test_external_features_follow_split_indices(blobs):
    split = make_experiment(blobs, 1, n_train=100, seed=2, n_test_normal=30, n_test_abnormal=100)
    pool = np.arange(600, dtype=float)[:, None] * np.ones((1, 3))
    tr, te = featurize("external", split, TrainConfig(), external=(pool, pool))
    np.testing.assert_array_equal(tr[:, 0], split.train_index)
    np.testing.assert_array_equal(te[:, 0], split.test_index)
    with pytest.raises(ValueError):
        featurize("external", split, TrainConfig())
    with pytest.raises(ValueError):
        featurize("vgg", split, TrainConfig())
