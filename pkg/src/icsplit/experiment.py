"""One cell of the evaluation grid: features -> OCSVM -> tuned threshold -> BACC."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from icsplit import ocsvm
from icsplit.baselines import (cae_features, cls_features, hog_batch, original_features,
                               pca_fit, pca_transform)
from icsplit.datasets import ExperimentSplit
from icsplit.metrics import balanced_accuracy, confusion
from icsplit.pipeline import TrainConfig, train_extractor

METHODS = ("ours", "original", "pca", "hog", "cae", "cls", "external")
TRAINED_METHODS = ("ours", "cae", "cls")


@dataclass(frozen=True)
class OcsvmConfig:
    nu: float = 0.1
    gamma: float | None = None  # None: 1 / n_features
    tol: float = 1e-4
    threshold: str = "validation"  # or "zero"


@dataclass
class CellResult:
    bacc: float
    threshold: float
    model: ocsvm.OcsvmModel


def read_feature_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Precomputed features: header row, then ``label, f0, f1, ...`` per sample.

    The label column may sit anywhere as long as its header is ``label``.
    """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if "label" not in header:
            raise ValueError(f"{path}: header lacks a 'label' column")
        li = header.index("label")
        labels, rows = [], []
        for row in reader:
            if not row:
                continue
            labels.append(int(row[li]))
            rows.append([float(v) for k, v in enumerate(row) if k != li])
    return np.array(rows, dtype=np.float64), np.array(labels, dtype=np.int64)


def write_feature_csv(path, features: np.ndarray, labels: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["label"] + [f"f{i}" for i in range(features.shape[1])])
        for label, row in zip(labels, features):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


def featurize(method: str, split: ExperimentSplit, train_cfg: TrainConfig,
              external: tuple | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Training and test feature matrices for ``method``.

    ``external`` is ``(train_pool_features, test_pool_features)``, rows aligned
    with the image sets the split was drawn from.
    """
    if method == "original":
        return original_features(split.train), original_features(split.test)
    if method == "pca":
        model = pca_fit(original_features(split.train), 64)
        return (pca_transform(model, original_features(split.train)),
                pca_transform(model, original_features(split.test)))
    if method == "hog":
        return hog_batch(split.train), hog_batch(split.test)
    if method in TRAINED_METHODS:
        trainer = {"ours": train_extractor, "cae": cae_features, "cls": cls_features}[method]
        extractor = trainer(split.train, replace(train_cfg, seed=split.seed))
        return extractor.features(split.train), extractor.features(split.test)
    if method == "external":
        if external is None:
            raise ValueError("method 'external' needs precomputed feature files")
        train_pool, test_pool = external
        return train_pool[split.train_index], test_pool[split.test_index]
    raise ValueError(f"unknown method {method!r}")


def evaluate_features(train_f: np.ndarray, test_f: np.ndarray, split: ExperimentSplit,
                      cfg: OcsvmConfig = OcsvmConfig()) -> CellResult:
    """Fit the OCSVM on training features and score the non-validation test rows."""
    model = ocsvm.fit(train_f, nu=cfg.nu, gamma=cfg.gamma, tol=cfg.tol)
    scores = ocsvm.decision_score(model, test_f)
    if cfg.threshold == "validation":
        model.threshold = ocsvm.choose_threshold(scores[split.val_mask],
                                                 split.test_labels[split.val_mask])
    elif cfg.threshold != "zero":
        raise ValueError(f"unknown threshold mode {cfg.threshold!r}")
    keep = ~split.val_mask
    predicted = np.where(scores[keep] < model.threshold, 1, 0)
    bacc = balanced_accuracy(confusion(split.test_labels[keep], predicted))
    return CellResult(bacc, model.threshold, model)


def run_cell(method: str, split: ExperimentSplit, train_cfg: TrainConfig,
             ocsvm_cfg: OcsvmConfig = OcsvmConfig(), external=None) -> CellResult:
    train_f, test_f = featurize(method, split, train_cfg, external)
    return evaluate_features(train_f, test_f, split, ocsvm_cfg)
