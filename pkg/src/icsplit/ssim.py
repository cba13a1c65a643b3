"""Structural similarity between images and their reconstructions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SsimConfig:
    """Window and stabilizer settings.

    Defaults follow Wang et al. (2004): ``k1=0.01``, ``k2=0.03``, Gaussian
    window with ``sigma=1.5``; the window is 7x7 so that it fits 28x28 inputs
    comfortably.
    """

    window: int = 7
    gaussian: bool = True
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    @property
    def c1(self) -> float:
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.data_range) ** 2

    def kernel_1d(self) -> np.ndarray:
        if not self.gaussian:
            return np.full(self.window, 1.0 / self.window)
        r = np.arange(self.window) - (self.window - 1) / 2.0
        g = np.exp(-0.5 * (r / self.sigma) ** 2)
        return g / g.sum()

    def kernel_2d(self) -> np.ndarray:
        g = self.kernel_1d()
        return np.outer(g, g)


def _filter(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' weighted window sums over axes 1 and 2 of (N, H, W, C)."""
    k = len(g)
    ho, wo = x.shape[1] - k + 1, x.shape[2] - k + 1
    rows = sum(g[i] * x[:, i:i + ho] for i in range(k))
    return sum(g[j] * rows[:, :, j:j + wo] for j in range(k))


def ssim_batch(x: np.ndarray, xhat: np.ndarray, cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    """SSIM of every pair ``(x[i], xhat[i])`` for ``(N, H, W, C)`` batches.

    Local statistics use the window weights (biased estimates); the image
    score is the mean local SSIM over all valid window positions, averaged
    over channels.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(xhat, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.ndim != 4:
        raise ValueError(f"expected (N, H, W, C) batches, got {x.shape}")
    if cfg.window > x.shape[1] or cfg.window > x.shape[2]:
        raise ValueError(f"window {cfg.window} larger than image {x.shape[1:3]}")
    g = cfg.kernel_1d()
    mu_x = _filter(x, g)
    mu_y = _filter(y, g)
    sxx = _filter(x * x, g) - mu_x * mu_x
    syy = _filter(y * y, g) - mu_y * mu_y
    sxy = _filter(x * y, g) - mu_x * mu_y
    c1, c2 = cfg.c1, cfg.c2
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    return (num / den).mean(axis=(1, 2, 3))


def _as_batch(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[..., None]
    return img[None]


def ssim(x: np.ndarray, xhat: np.ndarray, cfg: SsimConfig = SsimConfig()) -> float:
    """SSIM of two images shaped ``(H, W)`` or ``(H, W, C)``."""
    x, xhat = np.asarray(x), np.asarray(xhat)
    if x.shape != xhat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {xhat.shape}")
    return float(ssim_batch(_as_batch(x), _as_batch(xhat), cfg)[0])


def score_dataset(params, images: np.ndarray, cfg: SsimConfig = SsimConfig(),
                  batch_size: int = 256) -> np.ndarray:
    """SSIM between every image and its autoencoder reconstruction."""
    from icsplit.nn import reconstruct

    scores = np.empty(len(images))
    for start in range(0, len(images), batch_size):
        chunk = images[start:start + batch_size]
        scores[start:start + len(chunk)] = ssim_batch(chunk, reconstruct(params, chunk), cfg)
    return scores
