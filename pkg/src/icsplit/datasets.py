"""Dataset readers (IDX, CIFAR-10 binary batches, CSV) and one-class experiment splits."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 32 * 32 * 3

NEGATIVE = 0  # normal
POSITIVE = 1  # abnormal


class DatasetFormatError(ValueError):
    """A dataset file does not follow its binary or text format."""


@dataclass(frozen=True)
class ImageSet:
    """Images as a ``(N, H, W, C)`` array with one integer class label each."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValueError(f"images must be (N, H, W, C), got {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise ValueError("images and labels differ in length")

    @property
    def shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    def __len__(self):
        return len(self.images)

    def subset(self, idx) -> "ImageSet":
        return ImageSet(self.images[idx], self.labels[idx])

    @staticmethod
    def concat(*sets: "ImageSet") -> "ImageSet":
        return ImageSet(np.concatenate([s.images for s in sets]),
                        np.concatenate([s.labels for s in sets]))


# -- IDX ----------------------------------------------------------------------

def _read_idx(path, magic_expected: int) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise DatasetFormatError(f"{path}: file too short for an IDX header")
    magic, count = struct.unpack(">II", data[:8])
    if magic != magic_expected:
        raise DatasetFormatError(f"{path}: bad magic number 0x{magic:08x}, "
                                 f"expected 0x{magic_expected:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise DatasetFormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    expected = int(np.prod(dims))
    payload = data[header:]
    if len(payload) < expected:
        raise DatasetFormatError(f"{path}: truncated payload, {len(payload)} bytes "
                                 f"for {count} items of shape {dims[1:]}")
    if len(payload) > expected:
        raise DatasetFormatError(f"{path}: {len(payload) - expected} trailing bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path=None) -> ImageSet:
    """Read an IDX image file (and optionally its label file).

    Pixels stay raw bytes; use :func:`minmax_scale` afterwards.  Without a
    label file every label is 0.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    if labels_path is None:
        labels = np.zeros(len(images), dtype=np.int64)
    else:
        labels = _read_idx(labels_path, IDX_LABELS_MAGIC).astype(np.int64)
        if len(labels) != len(images):
            raise DatasetFormatError(f"count mismatch: {len(images)} images, "
                                     f"{len(labels)} labels")
    return ImageSet(images[..., None], labels)


def write_idx(images: np.ndarray, labels: np.ndarray | None, images_path,
              labels_path=None) -> None:
    """Write uint8 ``(N, H, W)`` images (and labels) in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim == 4:
        images = images[..., 0]
    n, h, w = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w)
                                  + images.tobytes())
    if labels_path is not None:
        labels = np.asarray(labels, dtype=np.uint8)
        Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels))
                                      + labels.tobytes())


# -- CIFAR-10 -----------------------------------------------------------------

def load_cifar10(paths) -> ImageSet:
    """Read CIFAR-10 binary batches (1 label byte + 3072 channel-planar pixel bytes)."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    images, labels = [], []
    for path in paths:
        data = Path(path).read_bytes()
        if len(data) == 0 or len(data) % CIFAR_RECORD:
            raise DatasetFormatError(f"{path}: length {len(data)} is not a multiple "
                                     f"of {CIFAR_RECORD}")
        records = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        lab = records[:, 0]
        if lab.max() > 9:
            raise DatasetFormatError(f"{path}: label byte {lab.max()} outside 0..9")
        labels.append(lab.astype(np.int64))
        images.append(records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1))
    return ImageSet(np.concatenate(images), np.concatenate(labels))


def write_cifar10(images: np.ndarray, labels: np.ndarray, path) -> None:
    images = np.asarray(images, dtype=np.uint8).transpose(0, 3, 1, 2).reshape(len(images), -1)
    records = np.concatenate([np.asarray(labels, dtype=np.uint8)[:, None], images], axis=1)
    Path(path).write_bytes(records.tobytes())


# -- CSV fixtures -------------------------------------------------------------

def load_csv(path, shape: tuple) -> ImageSet:
    """One row per image: ``label, p0, p1, ...`` in row-major H x W x C order.

    A header row is skipped when its first cell is not an integer.
    """
    rows = []
    labels = []
    with open(path, newline="") as f:
        for i, row in enumerate(csv.reader(f)):
            if not row:
                continue
            try:
                label = int(row[0])
            except ValueError:
                if i == 0:
                    continue
                raise DatasetFormatError(f"{path}:{i + 1}: bad label {row[0]!r}")
            labels.append(label)
            rows.append([float(v) for v in row[1:]])
    size = int(np.prod(shape))
    if any(len(r) != size for r in rows):
        raise DatasetFormatError(f"{path}: every row needs {size} pixel values")
    images = np.array(rows, dtype=np.float64).reshape((len(rows),) + tuple(shape))
    return ImageSet(images, np.array(labels, dtype=np.int64))


def write_csv(images_set: ImageSet, path) -> None:
    flat = images_set.images.reshape(len(images_set), -1)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["label"] + [f"p{i}" for i in range(flat.shape[1])])
        for label, row in zip(images_set.labels, flat):
            writer.writerow([int(label)] + [repr(float(v)) if flat.dtype.kind == "f"
                                            else int(v) for v in row])


# -- preprocessing ------------------------------------------------------------

def minmax_scale(images_set: ImageSet, lo: float | None = None,
                 hi: float | None = None) -> ImageSet:
    """Map pixels to [0, 1] with one min/max over the whole corpus.

    ``lo``/``hi`` override the corpus statistics, e.g. to scale a test file
    with the training corpus range.  A constant corpus maps to all zeros.
    """
    x = images_set.images.astype(np.float32)
    lo = float(x.min()) if lo is None else lo
    hi = float(x.max()) if hi is None else hi
    if hi == lo:
        scaled = np.zeros_like(x)
    else:
        scaled = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
    return ImageSet(scaled, images_set.labels)


# -- one-class experiments ----------------------------------------------------

@dataclass(frozen=True)
class ExperimentSplit:
    """Normal-only training images plus a binary-labelled test set.

    ``test_labels`` use ``NEGATIVE`` (0) for normal and ``POSITIVE`` (1) for
    abnormal.  ``val_mask`` marks the 20 % of test rows used to tune the
    decision threshold; evaluation uses the other rows.
    """

    train: np.ndarray
    test: np.ndarray
    test_labels: np.ndarray
    test_classes: np.ndarray
    val_mask: np.ndarray
    normal_class: int
    seed: int
    train_index: np.ndarray
    test_index: np.ndarray

    @property
    def validation(self) -> tuple[np.ndarray, np.ndarray]:
        return self.test[self.val_mask], self.test_labels[self.val_mask]

    @property
    def evaluation(self) -> tuple[np.ndarray, np.ndarray]:
        return self.test[~self.val_mask], self.test_labels[~self.val_mask]


def make_experiment(images_set: ImageSet, normal_class: int, n_train: int = 4000,
                    seed: int = 0, test_set: ImageSet | None = None,
                    n_test_normal: int | None = None,
                    n_test_abnormal: int | None = None,
                    val_fraction: float = 0.2) -> ExperimentSplit:
    """Build one normal-class experiment.

    ``n_train`` normal images are drawn from ``images_set``.  The test pool is
    ``test_set`` when given (e.g. the official test file), otherwise the
    leftover normal images of ``images_set`` together with all its abnormal
    images.  ``n_test_normal``/``n_test_abnormal`` subsample the pool
    (``None`` keeps everything).  ``test_index`` refers to rows of the pool.
    """
    rng = np.random.default_rng([seed, normal_class])
    labels = images_set.labels
    normal_idx = np.flatnonzero(labels == normal_class)
    if len(normal_idx) < n_train:
        raise ValueError(f"class {normal_class} has {len(normal_idx)} images, "
                         f"{n_train} requested for training")
    chosen = rng.permutation(normal_idx)
    train_idx = np.sort(chosen[:n_train])

    if test_set is None:
        pool = images_set
        pool_normal = np.sort(chosen[n_train:])
    else:
        pool = test_set
        pool_normal = np.flatnonzero(test_set.labels == normal_class)
    pool_abnormal = np.flatnonzero(pool.labels != normal_class)

    def take(idx, n, what):
        if n is None:
            return idx
        if n > len(idx):
            raise ValueError(f"{n} {what} test images requested, {len(idx)} available")
        return np.sort(rng.choice(idx, size=n, replace=False))

    test_normal = take(pool_normal, n_test_normal, "normal")
    test_abnormal = take(pool_abnormal, n_test_abnormal, "abnormal")
    test_idx = np.concatenate([test_normal, test_abnormal])
    test_labels = np.concatenate([np.full(len(test_normal), NEGATIVE),
                                  np.full(len(test_abnormal), POSITIVE)])

    n_val = int(round(val_fraction * len(test_idx)))
    val_mask = np.zeros(len(test_idx), dtype=bool)
    val_mask[rng.choice(len(test_idx), size=n_val, replace=False)] = True

    return ExperimentSplit(
        train=images_set.images[train_idx],
        test=pool.images[test_idx],
        test_labels=test_labels,
        test_classes=pool.labels[test_idx],
        val_mask=val_mask,
        normal_class=normal_class,
        seed=seed,
        train_index=train_idx,
        test_index=test_idx,
    )
