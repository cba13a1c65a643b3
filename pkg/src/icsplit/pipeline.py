"""Three-stage intra-class training of a one-class feature extractor.

1. ``stage1_train``: plain reconstruction training on all normal samples.
2. ``split``: SSIM between each sample and its reconstruction; the lowest
   ``rho`` percent become *atypical*, the rest *typical*.
3. ``stage3_train``: joint training with reconstruction, closeness among
   typical latents and dispersion of atypical latents, continuing from the
   stage-1 weights and optimizer state.

Stage 1 and stage 3 share one epoch loop, so ``rho=0`` with zero dispersion
weights is the closeness-only (CLS) model, and additionally ``alpha=0`` is a
plain convolutional autoencoder (CAE) trained for both stages' epochs.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from icsplit import nn
from icsplit.losses import IntraClassObjective, LossWeights, derangement
from icsplit.ssim import SsimConfig, score_dataset

log = logging.getLogger(__name__)

TYPICAL = "typical"
ATYPICAL = "atypical"


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    stage1_epochs: int = 60
    stage3_epochs: int = 30
    weights: LossWeights = LossWeights()
    rho: float = 10.0
    seed: int = 0
    ssim: SsimConfig = SsimConfig()
    lr: float = 1e-3
    l2: float = 1e-6
    latent_dim: int = 64
    filters: tuple = (8, 16, 32)
    dtype: str = "float32"

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.stage1_epochs < 1 or self.stage3_epochs < 0:
            raise ValueError("stage1_epochs must be >= 1 and stage3_epochs >= 0")
        if not 0 <= self.rho <= 100:
            raise ValueError(f"rho must lie in [0, 100], got {self.rho}")

    def architecture(self, input_shape) -> nn.ArchitectureSpec:
        return nn.default_architecture(tuple(input_shape), self.latent_dim, tuple(self.filters))


@dataclass
class TrainState:
    """Optimizer state and random streams carried from stage 1 into stage 3."""

    opt: nn.AdamState
    batch_rng: np.random.Generator
    atypical_rng: np.random.Generator
    pair_rng: np.random.Generator
    history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, cfg: TrainConfig, stage: int = 1) -> "TrainState":
        seqs = np.random.SeedSequence([cfg.seed, stage]).spawn(3)
        return cls(nn.AdamState(lr=cfg.lr), *(np.random.default_rng(s) for s in seqs))


def init_seed(cfg: TrainConfig) -> int:
    return int(np.random.SeedSequence([cfg.seed, 0]).generate_state(1)[0])


@dataclass(frozen=True)
class SplitAssignment:
    scores: np.ndarray
    atypical: np.ndarray  # boolean mask
    rho: float

    @property
    def typical_index(self) -> np.ndarray:
        return np.flatnonzero(~self.atypical)

    @property
    def atypical_index(self) -> np.ndarray:
        return np.flatnonzero(self.atypical)

    def flags(self) -> list:
        return [ATYPICAL if a else TYPICAL for a in self.atypical]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["index", "score", "flag"])
            for i, (s, flag) in enumerate(zip(self.scores, self.flags())):
                writer.writerow([i, repr(float(s)), flag])


def n_atypical(n: int, rho: float) -> int:
    """``round(rho% * n)`` with halves rounded up."""
    return int(math.floor(rho / 100.0 * n + 0.5))


def assign(scores: np.ndarray, rho: float) -> SplitAssignment:
    """Flag the ``rho`` percent lowest scores as atypical (stable on ties)."""
    if not 0 <= rho <= 100:
        raise ValueError(f"rho must lie in [0, 100], got {rho}")
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(scores, kind="stable")
    mask = np.zeros(len(scores), dtype=bool)
    mask[order[:n_atypical(len(scores), rho)]] = True
    return SplitAssignment(scores, mask, rho)


def split(params: nn.AutoencoderParams, train: np.ndarray, rho: float,
          ssim_cfg: SsimConfig = SsimConfig()) -> SplitAssignment:
    return assign(score_dataset(params, train, ssim_cfg), rho)


def _run_epochs(params, train, typical_idx, atypical_idx, cfg: TrainConfig,
                weights: LossWeights, epochs: int, state: TrainState, stage: int):
    bs = cfg.batch_size
    n_aty_batch = min(bs, len(atypical_idx))
    for epoch in range(epochs):
        order = state.batch_rng.permutation(typical_idx)
        n_steps = math.ceil(len(order) / bs)
        if n_aty_batch:
            # cycle through fresh shuffles so small atypical sets are reused
            n_draw = n_steps * n_aty_batch
            reps = math.ceil(n_draw / len(atypical_idx))
            aty_stream = np.concatenate([state.atypical_rng.permutation(atypical_idx)
                                         for _ in range(reps)])[:n_draw]
        sums = np.zeros(5)
        for step in range(n_steps):
            tb = order[step * bs:(step + 1) * bs]
            ab = aty_stream[step * n_aty_batch:(step + 1) * n_aty_batch] if n_aty_batch else tb[:0]
            nt, na = len(tb), len(ab)
            objective = IntraClassObjective(
                n_typical=nt,
                weights=weights,
                typical_partner=derangement(nt, state.pair_rng) if nt >= 2 else None,
                atypical_partner=derangement(na, state.pair_rng) if na >= 2 else None,
                typical_of_atypical=state.pair_rng.integers(0, nt, size=na),
            )
            batch = train[np.concatenate([tb, ab])] if na else train[tb]
            try:
                loss, grads = nn.backward(params, batch, objective, l2=cfg.l2)
            except FloatingPointError as exc:
                raise TrainingDiverged(
                    f"stage {stage}, epoch {epoch + 1}, step {step + 1}: {exc}; "
                    f"last terms (rec, cls, disp1, disp2) = {objective.last_terms}") from exc
            nn.optimizer_step(params.tensors, grads, state.opt)
            sums += (loss,) + tuple(objective.last_terms)
        means = sums / n_steps
        state.history.append({"stage": stage, "epoch": epoch + 1, "loss": means[0],
                              "rec": means[1], "cls": means[2], "disp1": means[3],
                              "disp2": means[4]})
        log.debug("stage %d epoch %d loss %.6g", stage, epoch + 1, means[0])
    return params


def stage1_train(train: np.ndarray, cfg: TrainConfig, state: TrainState | None = None,
                 params: nn.AutoencoderParams | None = None) -> nn.AutoencoderParams:
    """Reconstruction-only training (plus L2) on every training sample."""
    if len(train) == 0:
        raise ValueError("empty training set")
    state = state or TrainState.fresh(cfg, 1)
    if params is None:
        params = nn.init_params(cfg.architecture(train.shape[1:]), init_seed(cfg),
                                np.dtype(cfg.dtype))
    train = np.asarray(train, dtype=params.dtype)
    return _run_epochs(params, train, np.arange(len(train)), np.arange(0),
                       cfg, LossWeights(0.0, 0.0, 0.0), cfg.stage1_epochs, state, 1)


def stage3_train(params: nn.AutoencoderParams, train: np.ndarray, assignment: SplitAssignment,
                 cfg: TrainConfig, state: TrainState | None = None) -> nn.AutoencoderParams:
    """Joint typical/atypical training, in place on ``params``.

    Each step draws a typical sub-batch of ``batch_size`` rows and an atypical
    sub-batch of ``min(batch_size, n_atypical)`` rows.
    """
    if len(assignment.atypical) != len(train):
        raise ValueError("assignment does not cover the training set")
    typical_idx = assignment.typical_index
    atypical_idx = assignment.atypical_index
    if len(typical_idx) < 2:
        raise ValueError("stage 3 needs at least two typical samples")
    if assignment.rho > 0 and 0 < len(atypical_idx) < 2:
        raise ValueError("stage 3 needs at least two atypical samples when rho > 0")
    state = state or TrainState.fresh(cfg, 3)
    train = np.asarray(train, dtype=params.dtype)
    return _run_epochs(params, train, typical_idx, atypical_idx, cfg, cfg.weights,
                       cfg.stage3_epochs, state, 3)


@dataclass
class TrainedExtractor:
    params: nn.AutoencoderParams
    assignment: SplitAssignment | None
    history: list

    def features(self, images: np.ndarray) -> np.ndarray:
        return extract_features(self.params, images)


def train_extractor(train: np.ndarray, cfg: TrainConfig) -> TrainedExtractor:
    """Run all three stages and return the trained encoder."""
    state = TrainState.fresh(cfg, 1)
    params = stage1_train(train, cfg, state)
    if cfg.rho > 0:
        assignment = split(params, train, cfg.rho, cfg.ssim)
    else:
        assignment = assign(np.zeros(len(train)), 0.0)
    stage3_train(params, train, assignment, cfg, state)
    return TrainedExtractor(params, assignment, state.history)


def extract_features(params: nn.AutoencoderParams, images: np.ndarray,
                     batch_size: int = 512) -> np.ndarray:
    """Encoder output for every image, as float64."""
    out = [nn.encode(params, images[i:i + batch_size]) for i in range(0, len(images), batch_size)]
    if not out:
        return np.zeros((0, params.arch.latent_dim))
    return np.concatenate(out).astype(np.float64)


def cae_config(cfg: TrainConfig) -> TrainConfig:
    return replace(cfg, weights=LossWeights(0.0, 0.0, 0.0), rho=0.0)


def cls_config(cfg: TrainConfig) -> TrainConfig:
    return replace(cfg, weights=LossWeights(cfg.weights.alpha, 0.0, 0.0), rho=0.0)
