"""Reconstruction, closeness and dispersion losses and their weighted sum.

Each loss has a value function plus a ``*_grad`` companion returning the
gradient with respect to its array inputs.  Distances are root-mean-square
over the latent dimension: ``sqrt(|a - b|^2 / L)``.  The square root has no
derivative at zero distance, so gradients divide by
``sqrt(d^2 / L + SQRT_EPS)`` while values stay exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT_EPS = 1e-12


class NonFiniteLoss(ValueError, FloatingPointError):
    """A loss term came out as nan or inf."""


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta1: float = 1e-5
    beta2: float = 1e-5

    def __post_init__(self):
        for name in ("alpha", "beta1", "beta2"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")


def derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random permutation of ``range(n)`` without fixed points (n >= 2)."""
    if n < 2:
        raise ValueError("a fixed-point-free pairing needs at least 2 rows")
    idx = np.arange(n)
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == idx):
            return perm


def _check_pairing(partner, n):
    partner = np.asarray(partner)
    if n < 2:
        raise ValueError("pairing losses need B >= 2")
    if partner.shape != (n,):
        raise ValueError(f"partner index has shape {partner.shape}, expected ({n},)")
    if np.any(partner == np.arange(n)):
        raise ValueError("partner index has a fixed point")
    return partner


def _rms_dist(a, b):
    d = a - b
    return np.sqrt(np.mean(d * d, axis=1)), d


def _rms_dist_grad(a, b, scale):
    """Gradient of ``scale * sum_j rms(a_j - b_j)`` w.r.t. ``a`` (and -it w.r.t. ``b``)."""
    d = a - b
    L = a.shape[1]
    denom = np.sqrt(np.sum(d * d, axis=1) / L + SQRT_EPS)
    return scale * d / (L * denom[:, None])


def rec_loss(x: np.ndarray, xhat: np.ndarray) -> float:
    """Mean over the batch of squared Euclidean reconstruction errors."""
    if x.shape != xhat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {xhat.shape}")
    if len(x) < 1:
        raise ValueError("empty batch")
    d = (xhat - x).reshape(len(x), -1)
    return float(np.sum(d * d) / len(x))


def rec_loss_grad(x: np.ndarray, xhat: np.ndarray) -> np.ndarray:
    """Gradient of :func:`rec_loss` w.r.t. ``xhat``."""
    return 2.0 * (xhat - x) / len(x)


def closeness_loss(z: np.ndarray, partner: np.ndarray) -> float:
    """Mean RMS distance of each latent row to its partner row ``z[partner[j]]``."""
    partner = _check_pairing(partner, len(z))
    dist, _ = _rms_dist(z, z[partner])
    return float(dist.mean())


def closeness_loss_grad(z: np.ndarray, partner: np.ndarray) -> np.ndarray:
    partner = _check_pairing(partner, len(z))
    g = _rms_dist_grad(z, z[partner], 1.0 / len(z))
    out = g.copy()
    np.add.at(out, partner, -g)
    return out


def dispersion_loss(z_atypical: np.ndarray, partner: np.ndarray,
                    z_typical_partners: np.ndarray) -> tuple[float, float]:
    """``(disp1, disp2)``, both non-positive.

    ``disp1`` is minus the mean RMS distance between atypical rows and their
    atypical partners; ``disp2`` is minus the mean RMS distance between row j
    of ``z_atypical`` and row j of ``z_typical_partners``.
    """
    if z_atypical.shape != z_typical_partners.shape:
        raise ValueError(f"shape mismatch {z_atypical.shape} vs {z_typical_partners.shape}")
    partner = _check_pairing(partner, len(z_atypical))
    d1, _ = _rms_dist(z_atypical, z_atypical[partner])
    d2, _ = _rms_dist(z_atypical, z_typical_partners)
    return -float(d1.mean()), -float(d2.mean())


def dispersion_loss_grad(z_atypical, partner, z_typical_partners):
    """Gradients ``(d disp1 / d z_atypical, d disp2 / d z_atypical, d disp2 / d z_typical_partners)``."""
    partner = _check_pairing(partner, len(z_atypical))
    b = len(z_atypical)
    g1 = _rms_dist_grad(z_atypical, z_atypical[partner], -1.0 / b)
    d1 = g1.copy()
    np.add.at(d1, partner, -g1)
    g2 = _rms_dist_grad(z_atypical, z_typical_partners, -1.0 / b)
    return d1, g2, -g2


def total_loss(rec: float, cls: float, disp1: float, disp2: float,
               w: LossWeights = LossWeights()) -> float:
    terms = (rec, cls, disp1, disp2)
    if not all(math.isfinite(t) for t in terms):
        raise NonFiniteLoss(f"non-finite loss term in {terms}")
    return rec + w.alpha * cls + w.beta1 * disp1 + w.beta2 * disp2


class ReconstructionObjective:
    """Plain autoencoder objective, usable as an ``nn.backward`` loss spec."""

    def __call__(self, x, z, xhat):
        return rec_loss(x, xhat), None, rec_loss_grad(x, xhat)


@dataclass
class IntraClassObjective:
    """Joint objective over a batch whose first ``n_typical`` rows are typical.

    * reconstruction over every row,
    * closeness among typical rows paired by ``typical_partner``,
    * disp1 among the atypical rows paired by ``atypical_partner``,
    * disp2 between atypical row j and typical row ``typical_of_atypical[j]``.

    Pairings that need two rows are skipped (term = 0) when a subset is
    smaller than that; a zero weight also skips its term.
    """

    n_typical: int
    weights: LossWeights
    typical_partner: np.ndarray | None = None
    atypical_partner: np.ndarray | None = None
    typical_of_atypical: np.ndarray | None = None
    last_terms: tuple = (0.0, 0.0, 0.0, 0.0)

    def __call__(self, x, z, xhat):
        w = self.weights
        nt = self.n_typical
        zt, za = z[:nt], z[nt:]
        rec = rec_loss(x, xhat)
        dxhat = rec_loss_grad(x, xhat)
        dz = np.zeros_like(z)
        cls = disp1 = disp2 = 0.0

        if w.alpha and self.typical_partner is not None:
            cls = closeness_loss(zt, self.typical_partner)
            dz[:nt] += w.alpha * closeness_loss_grad(zt, self.typical_partner)
        if len(za) and (w.beta1 or w.beta2):
            zp = zt[self.typical_of_atypical]
            if self.atypical_partner is not None:
                d1_val, d2_val = dispersion_loss(za, self.atypical_partner, zp)
                ga1, ga2, gt2 = dispersion_loss_grad(za, self.atypical_partner, zp)
                disp1 = d1_val
                dz[nt:] += w.beta1 * ga1
            else:
                dist, _ = _rms_dist(za, zp)
                d2_val = -float(dist.mean())
                ga2 = _rms_dist_grad(za, zp, -1.0 / len(za))
                gt2 = -ga2
            disp2 = d2_val
            dz[nt:] += w.beta2 * ga2
            np.add.at(dz, self.typical_of_atypical, w.beta2 * gt2)

        self.last_terms = (rec, cls, disp1, disp2)
        return total_loss(rec, cls, disp1, disp2, w), dz, dxhat
