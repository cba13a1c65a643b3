"""Baseline feature extractors: raw pixels, PCA, HOG, CAE and CLS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.feature import hog

from icsplit.pipeline import TrainConfig, TrainedExtractor, cae_config, cls_config, train_extractor


def original_features(images: np.ndarray) -> np.ndarray:
    """Row-major vectorization of each ``(H, W, C)`` image."""
    images = np.asarray(images)
    return images.reshape(len(images), -1).astype(np.float64)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, D), rows orthonormal; zero rows past the data rank
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return len(self.components)


def pca_fit(features: np.ndarray, n_components: int = 64) -> PcaModel:
    """Principal axes from the SVD of the centered data.

    When the data has fewer than ``n_components`` directions (few samples or
    low rank), the missing axes are zero rows, so their projections are 0.
    Axis signs are fixed so the largest-magnitude loading is positive.
    """
    x = np.asarray(features, dtype=np.float64)
    if len(x) < 2:
        raise ValueError("PCA needs at least two samples")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    var = s ** 2 / (len(x) - 1)
    k = min(n_components, len(vt))
    comps = vt[:k]
    var = var[:k]
    # drop numerically null directions
    keep = var > var[0] * 1e-20 if var[0] > 0 else np.zeros(k, dtype=bool)
    comps = comps[keep]
    var = var[keep]
    signs = np.sign(comps[np.arange(len(comps)), np.argmax(np.abs(comps), axis=1)])
    comps = comps * signs[:, None]
    pad = n_components - len(comps)
    if pad > 0:
        comps = np.vstack([comps, np.zeros((pad, x.shape[1]))])
        var = np.concatenate([var, np.zeros(pad)])
    return PcaModel(mean, comps, var)


def pca_transform(model: PcaModel, features: np.ndarray) -> np.ndarray:
    return (np.asarray(features, dtype=np.float64) - model.mean) @ model.components.T


def pca_reconstruction_error(model: PcaModel, features: np.ndarray, k: int) -> float:
    """Mean squared residual when keeping only the first ``k`` axes."""
    x = np.asarray(features, dtype=np.float64) - model.mean
    comps = model.components[:k]
    resid = x - (x @ comps.T) @ comps
    return float(np.mean(np.sum(resid ** 2, axis=1)))


@dataclass(frozen=True)
class HogConfig:
    """8x8-pixel cells, 2x2-cell blocks, 9 orientation bins.

    This yields 144 values for 28x28 images (3x3 cells, 2x2 blocks) and 324
    for 32x32 images (4x4 cells, 3x3 blocks).  Colour images use the channel
    with the strongest gradient at each pixel.
    """

    cell: int = 8
    block: int = 2
    orientations: int = 9
    block_norm: str = "L2-Hys"

    def length(self, shape) -> int:
        cells_h, cells_w = shape[0] // self.cell, shape[1] // self.cell
        bh, bw = cells_h - self.block + 1, cells_w - self.block + 1
        if bh < 1 or bw < 1:
            raise ValueError(f"image {shape[:2]} smaller than one HOG block")
        return bh * bw * self.block ** 2 * self.orientations


def hog_features(image: np.ndarray, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """HOG descriptor of one ``(H, W, C)`` image; a constant image gives zeros."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[..., None]
    cfg.length(image.shape)
    kwargs = dict(orientations=cfg.orientations, pixels_per_cell=(cfg.cell, cfg.cell),
                  cells_per_block=(cfg.block, cfg.block), block_norm=cfg.block_norm,
                  feature_vector=True)
    if image.shape[-1] == 1:
        return hog(image[..., 0], **kwargs)
    return hog(image, channel_axis=-1, **kwargs)


def hog_batch(images: np.ndarray, cfg: HogConfig = HogConfig()) -> np.ndarray:
    return np.stack([hog_features(im, cfg) for im in images]) if len(images) else \
        np.zeros((0, cfg.length(images.shape[1:])))


def cae_features(train: np.ndarray, cfg: TrainConfig) -> TrainedExtractor:
    """Unconstrained autoencoder sharing the architecture of the proposed model."""
    return train_extractor(train, cae_config(cfg))


def cls_features(train: np.ndarray, cfg: TrainConfig) -> TrainedExtractor:
    """Autoencoder with the closeness term but no splitting."""
    return train_extractor(train, cls_config(cfg))
