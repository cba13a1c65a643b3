"""Experiment manifests: plain-text ``key = value`` files with sections.

A manifest names the data files, the grid of normal classes, methods and
seeds, and every training and OCSVM setting.  Unknown sections or keys are
rejected so a typo cannot silently fall back to a default.  Paths may use
``~`` and ``$VARS`` and are resolved relative to the manifest file.

Example::

    [data]
    name = mnist
    format = idx
    train = $MNIST_DIR/train-images.idx3-ubyte
    train_labels = $MNIST_DIR/train-labels.idx1-ubyte
    test = $MNIST_DIR/t10k-images.idx3-ubyte
    test_labels = $MNIST_DIR/t10k-labels.idx1-ubyte

    [experiment]
    classes = 0, 1, 2
    methods = ours, cae, original
    seeds = 0, 1, 2
    n_train = 1000
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from icsplit import datasets
from icsplit.experiment import METHODS, OcsvmConfig
from icsplit.losses import LossWeights
from icsplit.pipeline import TrainConfig
from icsplit.ssim import SsimConfig


class ConfigError(ValueError):
    """Invalid manifest: unknown key, bad value or missing file."""


FORMATS = ("idx", "cifar10", "csv")

# section -> key -> parser; a value of None means "not set"
_KEYS = {
    "data": ("name", "format", "train", "train_labels", "test", "test_labels", "shape",
             "external_train", "external_test"),
    "experiment": ("classes", "methods", "seeds", "n_train", "n_test_normal",
                   "n_test_abnormal", "val_fraction", "workers"),
    "train": ("batch_size", "stage1_epochs", "stage3_epochs", "alpha", "beta1", "beta2", "rho",
              "lr", "l2", "latent_dim", "filters", "dtype", "ssim_window", "ssim_gaussian"),
    "ocsvm": ("nu", "gamma", "tol", "threshold"),
    "output": ("directory",),
}


@dataclass(frozen=True)
class DataSpec:
    name: str
    format: str
    train: tuple
    train_labels: Path | None = None
    test: tuple = ()
    test_labels: Path | None = None
    shape: tuple | None = None
    external_train: Path | None = None
    external_test: Path | None = None


@dataclass(frozen=True)
class Manifest:
    data: DataSpec
    classes: tuple = tuple(range(10))
    methods: tuple = ("ours",)
    seeds: tuple = (0, 1, 2, 3, 4)
    n_train: int = 4000
    n_test_normal: int | None = None
    n_test_abnormal: int | None = None
    val_fraction: float = 0.2
    workers: int = 1
    train: TrainConfig = TrainConfig()
    ocsvm: OcsvmConfig = OcsvmConfig()
    output: Path = Path("results")
    source: Path | None = field(default=None, compare=False)

    def with_train(self, **changes) -> "Manifest":
        return replace(self, train=replace(self.train, **changes))


# -- value parsing ---------------------------------------------------------------

def _ints(text):
    return tuple(int(v) for v in _items(text))


def _items(text):
    return [v.strip() for v in text.replace("\n", ",").split(",") if v.strip()]


def _optional_int(text):
    return None if text.strip().lower() in ("", "all", "none") else int(text)


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "yes", "true", "on"):
        return True
    if low in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _path(text, base: Path) -> Path:
    p = Path(os.path.expanduser(os.path.expandvars(text.strip())))
    return p if p.is_absolute() else base / p


def _existing(text, base, key):
    p = _path(text, base)
    if not p.exists():
        raise ConfigError(f"[data] {key}: file not found: {p}")
    return p


def read_manifest(path, overrides=()) -> Manifest:
    """Parse a manifest file; ``overrides`` are ``section.key=value`` strings."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as f:
            parser.read_file(f)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} is not section.key=value")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name.strip(), value.strip())
    return parse_manifest(parser, path.parent.resolve(), source=path)


def parse_manifest(parser: configparser.ConfigParser, base: Path, source=None) -> Manifest:
    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(parser[section]) - set(_KEYS[section])
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    if not parser.has_section("data"):
        raise ConfigError("manifest has no [data] section")
    try:
        return _build(parser, base, source)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _build(parser, base, source) -> Manifest:
    d = parser["data"]
    fmt = d.get("format", "idx").strip().lower()
    if fmt not in FORMATS:
        raise ConfigError(f"[data] format must be one of {FORMATS}, got {fmt!r}")
    if "train" not in d:
        raise ConfigError("[data] train is required")

    def paths(key):
        return tuple(_existing(v, base, key) for v in _items(d[key])) if key in d else ()

    def one(key):
        return _existing(d[key], base, key) if key in d else None

    data = DataSpec(
        name=d.get("name", "dataset").strip(), format=fmt, train=paths("train"),
        train_labels=one("train_labels"), test=paths("test"), test_labels=one("test_labels"),
        shape=_ints(d["shape"]) if "shape" in d else None,
        external_train=one("external_train"), external_test=one("external_test"))
    if fmt == "csv" and data.shape is None:
        raise ConfigError("[data] shape is required for csv data")
    if fmt == "idx" and (len(data.train) != 1 or len(data.test) > 1):
        raise ConfigError("[data] idx data takes one train file and at most one test file")
    if (data.external_train is None) != (data.external_test is None):
        raise ConfigError("[data] external_train and external_test go together")

    kw = {}
    if parser.has_section("experiment"):
        e = parser["experiment"]
        if "classes" in e:
            kw["classes"] = _ints(e["classes"])
        if "seeds" in e:
            kw["seeds"] = _ints(e["seeds"])
        if "methods" in e:
            methods = tuple(m.lower() for m in _items(e["methods"]))
            bad = [m for m in methods if m not in METHODS]
            if bad:
                raise ConfigError(f"[experiment] unknown method(s) {bad}; choose from {METHODS}")
            if "external" in methods and data.external_train is None:
                raise ConfigError("method 'external' needs [data] external_train/external_test")
            kw["methods"] = methods
        for key in ("n_train", "workers"):
            if key in e:
                kw[key] = int(e[key])
        for key in ("n_test_normal", "n_test_abnormal"):
            if key in e:
                kw[key] = _optional_int(e[key])
        if "val_fraction" in e:
            kw["val_fraction"] = float(e["val_fraction"])
    if not kw.get("classes", (0,)) or not kw.get("seeds", (0,)) or not kw.get("methods", ("x",)):
        raise ConfigError("[experiment] classes, methods and seeds must not be empty")
    if kw.get("n_train", 1) < 1 or kw.get("workers", 1) < 1:
        raise ConfigError("[experiment] n_train and workers must be positive")
    if not 0 < kw.get("val_fraction", 0.2) < 1:
        raise ConfigError("[experiment] val_fraction must lie in (0, 1)")

    train = TrainConfig()
    if parser.has_section("train"):
        t = parser["train"]
        changes = {}
        for key in ("batch_size", "stage1_epochs", "stage3_epochs", "latent_dim"):
            if key in t:
                changes[key] = int(t[key])
        for key in ("rho", "lr", "l2"):
            if key in t:
                changes[key] = float(t[key])
        if "filters" in t:
            changes["filters"] = _ints(t["filters"])
        if "dtype" in t:
            if t["dtype"].strip() not in ("float32", "float64"):
                raise ConfigError("[train] dtype must be float32 or float64")
            changes["dtype"] = t["dtype"].strip()
        w = train.weights
        changes["weights"] = LossWeights(
            float(t.get("alpha", w.alpha)), float(t.get("beta1", w.beta1)),
            float(t.get("beta2", w.beta2)))
        s = train.ssim
        changes["ssim"] = replace(s, window=int(t.get("ssim_window", s.window)),
                                  gaussian=_bool(t.get("ssim_gaussian", str(s.gaussian))))
        train = replace(train, **changes)

    oc = OcsvmConfig()
    if parser.has_section("ocsvm"):
        o = parser["ocsvm"]
        gamma = o.get("gamma", "auto").strip().lower()
        threshold = o.get("threshold", oc.threshold).strip().lower()
        if threshold not in ("validation", "zero"):
            raise ConfigError("[ocsvm] threshold must be 'validation' or 'zero'")
        oc = OcsvmConfig(nu=float(o.get("nu", oc.nu)),
                         gamma=None if gamma == "auto" else float(gamma),
                         tol=float(o.get("tol", oc.tol)), threshold=threshold)
        if not 0 < oc.nu <= 1 or (oc.gamma is not None and oc.gamma <= 0):
            raise ConfigError("[ocsvm] need 0 < nu <= 1 and gamma > 0")

    output = Path("results")
    if parser.has_section("output") and "directory" in parser["output"]:
        output = _path(parser["output"]["directory"], base)
    elif source is not None:
        output = base / "results"
    return Manifest(data=data, train=train, ocsvm=oc, output=output, source=source, **kw)


# -- data loading ----------------------------------------------------------------

def _load(spec: DataSpec, files, labels):
    if spec.format == "idx":
        return datasets.load_idx(files[0], labels)
    if spec.format == "cifar10":
        return datasets.load_cifar10(files)
    return datasets.ImageSet.concat(*(datasets.load_csv(f, spec.shape) for f in files))


def load_data(spec: DataSpec):
    """``(train_set, test_set or None)`` scaled to [0, 1] with one shared range."""
    train = _load(spec, spec.train, spec.train_labels)
    test = _load(spec, spec.test, spec.test_labels) if spec.test else None
    if train.labels is None or (test is not None and test.labels is None):
        raise ConfigError(f"{spec.name}: labels are required")
    lo, hi = float(np.min(train.images)), float(np.max(train.images))
    if test is not None:
        lo, hi = min(lo, float(np.min(test.images))), max(hi, float(np.max(test.images)))
        test = datasets.minmax_scale(test, lo, hi)
    return datasets.minmax_scale(train, lo, hi), test
