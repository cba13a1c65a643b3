"""nu-one-class SVM with an RBF kernel, trained by SMO on the dual.

The dual solved here is::

    min_a  1/2 a^T K a   s.t.  0 <= a_i <= 1/(nu N),  sum_i a_i = 1

and the decision function is ``f(x) = sum_i a_i k(x_i, x) - rho``, positive
inside the learned region.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from icsplit.datasets import NEGATIVE, POSITIVE

FORMAT = "icsplit-ocsvm"
VERSION = 1


class ConvergenceError(RuntimeError):
    pass


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch {a.shape} vs {b.shape}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    d = a - b
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_matrix(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"feature length mismatch {a.shape[1]} vs {b.shape[1]}")
    sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
          - 2.0 * (a @ b.T))
    return np.exp(-gamma * np.maximum(sq, 0.0))


class KernelRows:
    """Kernel rows of the training matrix, dense when it fits in ``cache_bytes``."""

    def __init__(self, x: np.ndarray, gamma: float, cache_bytes: int = 512 * 2 ** 20):
        self.x = x
        self.gamma = gamma
        n = len(x)
        self.dense = rbf_matrix(x, x, gamma) if n * n * 8 <= cache_bytes else None
        self.max_rows = max(2, cache_bytes // (8 * n))
        self.cache = OrderedDict()

    def __getitem__(self, i: int) -> np.ndarray:
        if self.dense is not None:
            return self.dense[i]
        row = self.cache.get(i)
        if row is None:
            row = rbf_matrix(self.x[i:i + 1], self.x, self.gamma)[0]
            self.cache[i] = row
            if len(self.cache) > self.max_rows:
                self.cache.popitem(last=False)
        else:
            self.cache.move_to_end(i)
        return row


@dataclass
class OcsvmModel:
    support_vectors: np.ndarray
    alpha: np.ndarray
    offset: float
    gamma: float
    nu: float
    threshold: float = 0.0
    n_train: int = 0
    n_iter: int = 0
    objective: float = float("nan")

    def save(self, path) -> None:
        header = {"format": FORMAT, "version": VERSION, "nu": self.nu, "gamma": self.gamma,
                  "offset": self.offset, "threshold": self.threshold,
                  "n_train": self.n_train, "n_iter": self.n_iter, "objective": self.objective}
        with open(path, "wb") as f:
            np.savez(f, header=np.array(json.dumps(header, sort_keys=True)),
                     support_vectors=self.support_vectors, alpha=self.alpha)

    @classmethod
    def load(cls, path) -> "OcsvmModel":
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            if header.get("format") != FORMAT:
                raise ValueError(f"{path} is not an OCSVM model file")
            if header["version"] > VERSION:
                raise ValueError(f"model version {header['version']} is newer than {VERSION}")
            return cls(data["support_vectors"], data["alpha"], header["offset"],
                       header["gamma"], header["nu"], header["threshold"],
                       header["n_train"], header["n_iter"], header["objective"])


def fit(features: np.ndarray, nu: float = 0.1, gamma: float | None = None,
        tol: float = 1e-4, max_iter: int = 10 ** 7,
        cache_bytes: int = 512 * 2 ** 20) -> OcsvmModel:
    """SMO with maximal-violating-pair working-set selection.

    Stops once ``max_{a_j > 0} G_j - min_{a_i < C} G_i < tol`` where
    ``G = K a``.  ``gamma`` defaults to ``1 / n_features``.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) < 1:
        raise ValueError("features must be a non-empty (N, L) matrix")
    if not 0 < nu <= 1:
        raise ValueError(f"nu must lie in (0, 1], got {nu}")
    n = len(x)
    gamma = 1.0 / x.shape[1] if gamma is None else float(gamma)
    c = 1.0 / (nu * n)
    kern = KernelRows(x, gamma, cache_bytes)

    alpha = np.zeros(n)
    n_full = min(n, int(np.floor(nu * n)))
    alpha[:n_full] = c
    if n_full < n:
        alpha[n_full] = 1.0 - n_full * c
    if n_full == n:
        alpha[:] = 1.0 / n
    grad = np.zeros(n)
    for i in np.flatnonzero(alpha):
        grad += alpha[i] * kern[i]

    n_iter = 0
    while True:
        up = alpha < c
        low = alpha > 0
        g_up = np.where(up, grad, np.inf)
        g_low = np.where(low, grad, -np.inf)
        i = int(np.argmin(g_up))
        j = int(np.argmax(g_low))
        gap = g_low[j] - g_up[i]
        if gap < tol:
            break
        if n_iter >= max_iter:
            raise ConvergenceError(f"no convergence after {max_iter} iterations (gap {gap:.3g})")
        ki, kj = kern[i], kern[j]
        eta = ki[i] + kj[j] - 2.0 * ki[j]
        room_i, room_j = c - alpha[i], alpha[j]
        step = min(gap / max(eta, 1e-12), room_i, room_j)
        alpha[i] = c if step == room_i else alpha[i] + step
        alpha[j] = 0.0 if step == room_j else alpha[j] - step
        grad += step * (ki - kj)
        n_iter += 1

    free = (alpha > 0) & (alpha < c)
    if np.any(free):
        offset = float(grad[free].mean())
    else:
        at_upper = grad[alpha >= c]
        at_lower = grad[alpha <= 0]
        lo = at_upper.max() if at_upper.size else -np.inf
        hi = at_lower.min() if at_lower.size else np.inf
        offset = float(lo if not np.isfinite(hi) else hi if not np.isfinite(lo) else 0.5 * (lo + hi))
    sv = alpha > 0
    return OcsvmModel(support_vectors=x[sv], alpha=alpha[sv], offset=offset, gamma=gamma,
                      nu=nu, n_train=n, n_iter=n_iter,
                      objective=float(0.5 * alpha @ grad))


def decision_score(model: OcsvmModel, x: np.ndarray, batch_size: int = 2048) -> np.ndarray:
    """``sum_i a_i k(sv_i, x) - offset`` for a vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.support_vectors.shape[1]:
        raise ValueError(f"feature length {x.shape[1]} != {model.support_vectors.shape[1]}")
    out = np.concatenate([
        rbf_matrix(x[s:s + batch_size], model.support_vectors, model.gamma) @ model.alpha
        for s in range(0, len(x), batch_size)]) - model.offset if len(x) else np.zeros(0)
    return out[0] if single else out


def bacc_at_thresholds(scores: np.ndarray, labels: np.ndarray,
                       thresholds: np.ndarray) -> np.ndarray:
    """Balanced accuracy of ``positive iff score < t`` for each threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = np.sort(scores[labels == POSITIVE])
    neg = np.sort(scores[labels == NEGATIVE])
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("threshold selection needs both normal and abnormal samples")
    tp = np.searchsorted(pos, thresholds, side="left")
    tn = len(neg) - np.searchsorted(neg, thresholds, side="left")
    return 0.5 * (tp / len(pos) + tn / len(neg))


def choose_threshold(scores: np.ndarray, labels: np.ndarray) -> float:
    """Threshold maximizing balanced accuracy on a validation set.

    Candidates are midpoints between consecutive distinct scores; ties go to
    the candidate closest to 0, then to the smaller one.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if not (np.any(labels == POSITIVE) and np.any(labels == NEGATIVE)):
        raise ValueError("threshold selection needs both normal and abnormal samples")
    distinct = np.unique(scores)
    if len(distinct) == 1:
        return float(distinct[0])
    candidates = 0.5 * (distinct[:-1] + distinct[1:])
    bacc = bacc_at_thresholds(scores, labels, candidates)
    best = np.flatnonzero(bacc == bacc.max())
    # lexsort: last key is primary
    pick = best[np.lexsort((candidates[best], np.abs(candidates[best])))[0]]
    return float(candidates[pick])


def predict(model: OcsvmModel, x: np.ndarray) -> np.ndarray:
    """``POSITIVE`` (abnormal) where the score falls below the threshold."""
    s = decision_score(model, x)
    return np.where(s < model.threshold, POSITIVE, NEGATIVE)
