# %% [markdown]
# Intra-class splitting on a toy image set
#
# A small autoencoder is trained on 8x8 images that are mostly squares, with
# about one cross in ten.  Crosses are rarer, so they reconstruct worse, and
# the SSIM split should flag them as atypical.  Joint training then pulls
# typical latents together while atypical latents stay spread out, so the
# atypical/typical spread ratio grows.
#
# Run with ``python demos/01_split_on_toy_shapes.py`` (a few seconds).

# %%
from dataclasses import replace

import numpy as np

from icsplit.losses import LossWeights
from icsplit.pipeline import TrainConfig, TrainState, split, stage1_train, stage3_train
from icsplit.pipeline import extract_features

rng = np.random.default_rng(0)
n = 300
square = np.zeros((8, 8))
square[2:6, 2:6] = 1.0
cross = np.zeros((8, 8))
cross[3:5, :] = 1.0
cross[:, 3:5] = 1.0
is_cross = rng.random(n) < 0.1
images = np.where(is_cross[:, None, None], cross, square)
images = np.clip(0.8 * images + 0.1 + rng.normal(0, 0.05, images.shape), 0, 1)[..., None]
print(f"{n} images, {is_cross.sum()} crosses")

# %% Stage 1: reconstruction only
cfg = TrainConfig(batch_size=32, stage1_epochs=40, stage3_epochs=30, filters=(4, 8, 8),
                  latent_dim=8, dtype="float64", rho=10,
                  weights=LossWeights(1.0, 0.015, 0.015))
state = TrainState.fresh(cfg)
params = stage1_train(images, cfg, state)
print(f"reconstruction loss after stage 1: {state.history[-1]['rec']:.4f} "
      f"(squared error summed over the 64 pixels)")

# %% Stage 2: lowest SSIM becomes atypical
assignment = split(params, images, cfg.rho)
flagged = assignment.atypical
print(f"atypical: {flagged.sum()} samples, of which {np.sum(flagged & is_cross)} are crosses")
print(f"mean SSIM  squares {assignment.scores[~is_cross].mean():.3f}  "
      f"crosses {assignment.scores[is_cross].mean():.3f}")

# %% Stage 3: joint training
def spread(z, mask):
    """Mean pairwise RMS distance within one group of latents."""
    g = z[mask]
    d = np.sqrt(((g[:, None] - g[None]) ** 2).mean(axis=-1))
    return d.sum() / (len(g) * (len(g) - 1))


before = extract_features(params, images)
stage3_train(params, images, assignment, cfg, state)
after = extract_features(params, images)
for name, z in (("before", before), ("after", after)):
    t, a = spread(z, ~flagged), spread(z, flagged)
    print(f"{name} stage 3: typical spread {t:.3f}, atypical spread {a:.3f}, ratio {a / t:.2f}")

# %% The same run with the default (much smaller) dispersion weights
quiet = replace(cfg, weights=LossWeights())
state_q = TrainState.fresh(quiet)
params_q = stage1_train(images, quiet, state_q)
stage3_train(params_q, images, split(params_q, images, quiet.rho), quiet, state_q)
z = extract_features(params_q, images)
t, a = spread(z, ~flagged), spread(z, flagged)
print(f"default weights: typical spread {t:.3f}, atypical spread {a:.3f}, ratio {a / t:.2f}")
