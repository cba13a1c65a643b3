"""Evaluation grids, result tables and sweep curves.

Each (normal class, method, seed) cell is independent: it draws its split,
extracts features, fits the OCSVM, tunes the threshold on the validation
rows and records the balanced accuracy of the remaining test rows.  A failing
cell is recorded with its error message and the grid carries on.

All CSV outputs are written once, in grid order, after every cell finished,
so the files depend only on the manifest and the data.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from icsplit import datasets
from icsplit.experiment import read_feature_csv, run_cell
from icsplit.manifest import Manifest, load_data
from icsplit.metrics import aggregate

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("dataset", "normal_class", "method", "seed", "bacc", "status")
CURVE_COLUMNS = ("mean_bacc", "std_bacc", "n_cells", "n_failed")


@dataclass(frozen=True)
class CellKey:
    normal_class: int
    method: str
    seed: int


@dataclass(frozen=True)
class ResultRow:
    dataset: str
    normal_class: int
    method: str
    seed: int
    bacc: float | None
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def as_csv(self) -> list:
        bacc = "" if self.bacc is None else f"{self.bacc:.6f}"
        return [self.dataset, self.normal_class, self.method, self.seed, bacc, self.status]


# worker-process globals, filled once per process by _init_worker
_DATA: dict = {}


def _init_worker(manifest: Manifest):
    train, test = load_data(manifest.data)
    external = None
    if manifest.data.external_train is not None:
        external = (read_feature_csv(manifest.data.external_train)[0],
                    read_feature_csv(manifest.data.external_test)[0])
    _DATA.update(manifest=manifest, train=train, test=test, external=external)


def _run_one(key: CellKey) -> ResultRow:
    m: Manifest = _DATA["manifest"]
    try:
        split = datasets.make_experiment(
            _DATA["train"], key.normal_class, m.n_train, key.seed, test_set=_DATA["test"],
            n_test_normal=m.n_test_normal, n_test_abnormal=m.n_test_abnormal,
            val_fraction=m.val_fraction)
        result = run_cell(key.method, split, m.train, m.ocsvm, _DATA["external"])
    except Exception as exc:  # recorded per cell; the grid goes on
        log.warning("cell %s failed: %s", key, exc)
        message = " ".join(f"{type(exc).__name__}: {exc}".split())
        return ResultRow(m.data.name, key.normal_class, key.method, key.seed, None,
                         f"error: {message}")
    log.info("class %d %s seed %d: bacc %.4f", key.normal_class, key.method, key.seed,
             result.bacc)
    return ResultRow(m.data.name, key.normal_class, key.method, key.seed, result.bacc)


def grid(manifest: Manifest) -> list[CellKey]:
    return [CellKey(c, meth, s) for c in manifest.classes for meth in manifest.methods
            for s in manifest.seeds]


def run_grid(manifest: Manifest, keys: list[CellKey] | None = None) -> list[ResultRow]:
    """Evaluate every cell, in a process pool when ``manifest.workers > 1``."""
    keys = grid(manifest) if keys is None else keys
    if manifest.workers == 1 or len(keys) == 1:
        _init_worker(manifest)
        try:
            return [_run_one(k) for k in keys]
        finally:
            _DATA.clear()
    with ProcessPoolExecutor(manifest.workers, initializer=_init_worker,
                             initargs=(manifest,)) as pool:
        return list(pool.map(_run_one, keys))


# -- tables ----------------------------------------------------------------------

def write_results(rows, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        writer.writerows(r.as_csv() for r in rows)


def read_results(path) -> list[ResultRow]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ValueError(f"{path}: expected columns {RESULT_COLUMNS}")
        return [ResultRow(r["dataset"], int(r["normal_class"]), r["method"], int(r["seed"]),
                          float(r["bacc"]) if r["bacc"] else None, r["status"]) for r in reader]


@dataclass(frozen=True)
class Summary:
    """Per-class mean/std over seeds, then their average over classes."""

    mean: float
    std: float
    n_cells: int
    n_failed: int


def summarize(rows) -> Summary:
    """Average over classes of the per-class seed mean, and of the per-class std.

    Only successful cells enter the statistics; a class without any
    successful cell is left out.
    """
    rows = list(rows)
    by_class: dict[int, list[float]] = {}
    for r in rows:
        if r.ok:
            by_class.setdefault(r.normal_class, []).append(r.bacc)
    failed = sum(not r.ok for r in rows)
    if not by_class:
        return Summary(float("nan"), float("nan"), len(rows), failed)
    stats = [aggregate(v) for _, v in sorted(by_class.items())]
    return Summary(float(np.mean([m for m, _ in stats])), float(np.mean([s for _, s in stats])),
                   len(rows), failed)


def _fmt(v: float) -> str:
    return "" if np.isnan(v) else f"{v:.6f}"


def write_aggregate(rows, path, methods=None) -> None:
    """Table with one row per normal class plus an ``average`` row.

    Columns: ``normal_class``, then ``<method>`` and ``<method>_std`` for each
    method, then ``failures`` (failed cells in that row).
    """
    rows = list(rows)
    methods = list(dict.fromkeys(methods or [r.method for r in rows]))
    classes = sorted({r.normal_class for r in rows})
    header = ["normal_class"] + [c for m in methods for c in (m, f"{m}_std")] + ["failures"]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for c in classes + ["average"]:
            cells = [r for r in rows if c == "average" or r.normal_class == c]
            line = [c]
            for m in methods:
                s = summarize(r for r in cells if r.method == m)
                line += [_fmt(s.mean), _fmt(s.std)]
            line.append(sum(not r.ok for r in cells))
            writer.writerow(line)


def write_curve(points, param: str, path) -> None:
    """``points`` is a list of ``(value, Summary)``."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow((param,) + CURVE_COLUMNS)
        for value, s in points:
            writer.writerow([repr(float(value)), _fmt(s.mean), _fmt(s.std), s.n_cells,
                             s.n_failed])


def read_curve(path):
    """``(param_name, x, mean, std)`` from a curve CSV."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header[1:]) != CURVE_COLUMNS:
            raise ValueError(f"{path}: expected header <param>,{','.join(CURVE_COLUMNS)}")
        xs, means, stds = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{line_no}: expected {len(header)} fields")
            try:
                xs.append(float(row[0]))
                means.append(float(row[1]) if row[1] else float("nan"))
                stds.append(float(row[2]) if row[2] else float("nan"))
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from exc
    return header[0], np.array(xs), np.array(means), np.array(stds)


# -- sweeps ----------------------------------------------------------------------

def sweep(manifest: Manifest, param: str, values) -> tuple[list, list[ResultRow]]:
    """Run the ``ours`` method for each ``rho`` or ``beta`` (beta1 = beta2) value."""
    points, all_rows = [], []
    for v in values:
        if param == "rho":
            m = manifest.with_train(rho=float(v))
        elif param == "beta":
            w = replace(manifest.train.weights, beta1=float(v), beta2=float(v))
            m = manifest.with_train(weights=w)
        else:
            raise ValueError(f"cannot sweep {param!r}")
        m = replace(m, methods=("ours",))
        rows = run_grid(m)
        points.append((float(v), summarize(rows)))
        all_rows += rows
    return points, all_rows


def output_dir(manifest: Manifest, override=None) -> Path:
    out = Path(override) if override else manifest.output
    out.mkdir(parents=True, exist_ok=True)
    return out
