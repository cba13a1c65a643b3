# %% [markdown]
# One-class SVM and threshold selection on 2-D blobs
#
# Normal points come from one Gaussian blob and abnormal ones from a ring
# around it.  The model is fit on normal points only.  The decision threshold
# is then tuned on a labelled validation split and judged on held-out rows.

# %%
import numpy as np

from icsplit.metrics import balanced_accuracy, confusion
from icsplit.ocsvm import choose_threshold, decision_score, fit

rng = np.random.default_rng(7)
train = rng.normal(0, 1, (500, 2))
angle = rng.uniform(0, 2 * np.pi, 200)
ring = np.c_[np.cos(angle), np.sin(angle)] * rng.uniform(2.5, 4, 200)[:, None]
test = np.r_[rng.normal(0, 1, (200, 2)), ring]
labels = np.r_[np.zeros(200, int), np.ones(200, int)]  # 1 = abnormal

# %% Fit and inspect the nu-property
model = fit(train, nu=0.1, gamma=0.5)
scores = decision_score(model, train)
print(f"{len(model.alpha)} support vectors ({len(model.alpha) / len(train):.1%}), "
      f"{np.mean(scores < 0):.1%} of training points outside the boundary")

# %% Tune the threshold on half of the test rows
order = rng.permutation(len(test))
val, held = order[:200], order[200:]
s = decision_score(model, test)
t = choose_threshold(s[val], labels[val])
for name, thr in (("zero threshold", 0.0), (f"tuned threshold {t:+.4f}", t)):
    pred = (s[held] < thr).astype(int)
    print(f"{name}: balanced accuracy {balanced_accuracy(confusion(labels[held], pred)):.3f}")
