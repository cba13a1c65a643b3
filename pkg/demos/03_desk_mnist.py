# %% [markdown]
# Desk-scale MNIST comparison
#
# One normal class, one seed, three feature extractors: the intra-class
# splitting encoder ("ours"), the plain convolutional autoencoder ("cae")
# and raw pixels ("original").  Each one feeds the same one-class SVM.
#
# Needs the four MNIST IDX files in ``$ICSPLIT_MNIST_DIR``.  Takes about
# twenty seconds.  The full grid is ``icsplit run manifests/desk-mnist.ini``.

# %%
import os
import sys
from pathlib import Path

from icsplit import datasets
from icsplit.experiment import OcsvmConfig, run_cell
from icsplit.manifest import load_data, read_manifest

root = Path(__file__).resolve().parent.parent
os.environ.setdefault("ICSPLIT_MNIST_DIR", "/root/data/mnist")
try:
    manifest = read_manifest(root / "manifests" / "desk-mnist.ini")
except ValueError as exc:
    sys.exit(f"cannot load MNIST: {exc}")
train_set, test_set = load_data(manifest.data)
print(f"{len(train_set)} training and {len(test_set)} test images of shape {train_set.shape}")

# %%
normal_class = int(sys.argv[1]) if len(sys.argv) > 1 else 1
split = datasets.make_experiment(train_set, normal_class, manifest.n_train, seed=0,
                                 test_set=test_set)
print(f"normal class {normal_class}: {len(split.train)} training images, "
      f"{len(split.test)} test images ({split.test_labels.mean():.0%} abnormal)")

# %%
for method in ("ours", "cae", "original"):
    result = run_cell(method, split, manifest.train, OcsvmConfig())
    print(f"{method:9s} balanced accuracy {result.bacc:.4f} "
          f"({len(result.model.alpha)} support vectors)")
