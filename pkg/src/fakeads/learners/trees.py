"""Decision trees, random forests, extra trees and histogram gradient boosting."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..parallel import n_threads
from . import _tree
from ._binning import Binned, as_csr, bin_matrix

CRITERIA = {"gini": _tree.GINI, "entropy": _tree.ENTROPY}


@dataclass
class TreeStack:
    """Concatenated trees; children indices are relative to each tree."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    tree_off: np.ndarray

    @property
    def n_trees(self):
        return len(self.tree_off) - 1

    @classmethod
    def empty(cls) -> "TreeStack":
        i = np.zeros(0, np.int32)
        return cls(i, np.zeros(0), i, i, np.zeros(0), np.zeros(1, np.int64))

    def head(self, k: int) -> "TreeStack":
        end = self.tree_off[k]
        return TreeStack(self.feature[:end], self.threshold[:end], self.left[:end], self.right[:end],
                         self.value[:end], self.tree_off[: k + 1].copy())

    def predict_sum(self, X, n_trees=None) -> np.ndarray:
        X = as_csr(X)
        out = np.zeros(X.shape[0])
        off = self.tree_off if n_trees is None else self.tree_off[: n_trees + 1]
        _tree.predict_sum(X.indptr.astype(np.int64), X.indices.astype(np.int32), X.data,
                          self.feature, self.threshold, self.left, self.right, self.value, off, out)
        return out


class _TreeCollector:
    def __init__(self):
        self.parts = []

    def add(self, binned: Binned, f, b, left, right, value):
        thr = np.zeros(len(f))
        inner = left >= 0
        thr[inner] = binned.thresholds[binned.thr_off[f[inner]] + b[inner]]
        self.parts.append((f, thr, left, right, value))

    def build(self) -> TreeStack:
        sizes = [len(p[0]) for p in self.parts]
        off = np.zeros(len(sizes) + 1, np.int64)
        off[1:] = np.cumsum(sizes)
        cat = [np.concatenate([p[i] for p in self.parts]) for i in range(5)]
        return TreeStack(cat[0].astype(np.int32), cat[1], cat[2].astype(np.int32),
                         cat[3].astype(np.int32), cat[4].astype(np.float64), off)


def _grow(binned, rows, stats, count, crit, splitter, max_features, max_depth, max_leaves,
          min_leaf, min_child_weight, lam, mask, seed):
    leaf_of = np.full(stats.shape[0], -1, np.int64)
    f, b, left, right, value = _tree.grow(
        binned.indptr, binned.feat, binned.bins, binned.bin_off, binned.zero_bin,
        binned.cptr, binned.crow, binned.cbin, rows.astype(np.int64).copy(), stats, count, crit, splitter, int(max_features),
        int(max_depth), int(max_leaves), float(min_leaf), float(min_child_weight), float(lam),
        mask, int(seed), leaf_of)
    return f, b, left, right, value, leaf_of


def resolve_max_features(value, d: int) -> int:
    if value is None:
        return 0
    if value == "sqrt":
        return max(1, int(math.sqrt(d)))
    if value == "log2":
        return max(1, int(math.log2(d))) if d > 1 else 1
    if isinstance(value, float) and 0 < value <= 1:
        return max(1, int(value * d))
    return int(value)


def fit_forest(X, y, *, n_trees=300, criterion="gini", bootstrap=True, random_splits=False,
               max_features="sqrt", max_depth=0, min_samples_leaf=1, seed=0) -> TreeStack:
    """Average of class-probability trees; one tree with no bootstrap is a plain CART."""
    binned = bin_matrix(X)
    n = len(y)
    y = np.asarray(y, dtype=np.int64)
    mf = resolve_max_features(max_features, binned.n_features)
    mask = np.ones(binned.n_features, np.bool_)
    rng = np.random.default_rng(seed)
    tree_seeds = rng.integers(0, 2**31 - 1, size=n_trees)
    crit = CRITERIA[criterion]
    splitter = _tree.RANDOM if random_splits else _tree.BEST

    def one(t):
        if bootstrap:
            w = np.bincount(np.random.default_rng(tree_seeds[t]).integers(0, n, n), minlength=n).astype(float)
        else:
            w = np.ones(n)
        rows = np.flatnonzero(w > 0)
        stats = np.stack([w * (y == 0), w * (y == 1)], axis=1)
        return _grow(binned, rows, stats, w, crit, splitter, mf, max_depth, 0,
                     min_samples_leaf, 0.0, 0.0, mask, tree_seeds[t])

    # trees are independent and seeded up front, so threading keeps results identical
    workers = min(n_threads(), n_trees)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            grown = list(pool.map(one, range(n_trees)))
    else:
        grown = [one(t) for t in range(n_trees)]
    trees = _TreeCollector()
    for f, b, left, right, value, _ in grown:
        trees.add(binned, f, b, left, right, value)
    return trees.build()


def forest_proba(model: TreeStack, X) -> np.ndarray:
    return model.predict_sum(X) / model.n_trees


@dataclass
class GBDTModel:
    trees: TreeStack
    base_score: float
    best_iteration: int
    train_loss: list
    holdout_loss: list

    def raw(self, X) -> np.ndarray:
        return self.base_score + self.trees.predict_sum(X)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def log_loss(y, raw) -> float:
    # mean of log(1 + exp(-s z)) with s = +-1, computed stably
    s = np.where(y == 1, 1.0, -1.0)
    return float(np.mean(np.logaddexp(0.0, -s * raw)))


def stratified_tail(y, fraction):
    """Last ``fraction`` of each class's rows, in input order."""
    hold = []
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        k = int(math.floor(fraction * len(idx)))
        if k == 0:
            return None
        hold.append(idx[len(idx) - k:])
    hold = np.sort(np.concatenate(hold))
    fit = np.setdiff1d(np.arange(len(y)), hold)
    return fit, hold


def fit_gbdt(X, y, *, learning_rate=0.05, n_trees=10_000, max_leaves=31, max_depth=0,
             min_samples_leaf=20, min_child_weight=1e-3, reg_lambda=1.0, colsample=1.0,
             random_splits=False, early_stopping=True, validation_fraction=0.1, patience=50,
             tol=1e-7, seed=0) -> GBDTModel:
    """Newton boosting of logistic loss with leaf-wise (or depth-limited) trees.

    Early stopping watches the held-out log-loss; when the data are too small
    to hold out rows of both classes it watches the training loss instead and
    stops once it improves by less than ``tol`` for ``patience`` rounds.
    """
    y = np.asarray(y, dtype=np.int64)
    Xc = as_csr(X)
    split = stratified_tail(y, validation_fraction) if early_stopping else None
    if split is None:
        fit_idx, hold_idx = np.arange(len(y)), None
    else:
        fit_idx, hold_idx = split
    binned = bin_matrix(Xc if hold_idx is None else Xc[fit_idx])
    yf = y[fit_idx]
    p0 = min(max(yf.mean(), 1e-6), 1 - 1e-6)
    base = math.log(p0 / (1 - p0))
    raw = np.full(len(yf), base)
    Xh = Xc[hold_idx] if hold_idx is not None else None
    raw_h = np.full(len(hold_idx), base) if hold_idx is not None else None

    rng = np.random.default_rng(seed)
    d = binned.n_features
    rows = np.arange(len(yf), dtype=np.int64)
    ones = np.ones(len(yf))
    crit_split = _tree.RANDOM if random_splits else _tree.BEST
    trees = _TreeCollector()
    train_loss = [log_loss(yf, raw)]
    hold_loss = [log_loss(y[hold_idx], raw_h)] if hold_idx is not None else []
    best, best_it, since = (hold_loss or train_loss)[0], 0, 0
    for it in range(n_trees):
        tseed = int(rng.integers(0, 2**31 - 1))
        if colsample < 1.0:
            mask = np.zeros(d, np.bool_)
            mask[rng.choice(d, size=max(1, int(round(colsample * d))), replace=False)] = True
        else:
            mask = np.ones(d, np.bool_)
        p = _sigmoid(raw)
        stats = np.stack([p - yf, np.maximum(p * (1 - p), 1e-16)], axis=1)
        f, b, left, right, value, leaf_of = _grow(
            binned, rows, stats, ones, _tree.NEWTON, crit_split, 0, max_depth, max_leaves,
            min_samples_leaf, min_child_weight, reg_lambda, mask, tseed)
        value = value * learning_rate
        if len(f) == 1:
            # no admissible split: the model has converged
            break
        raw = raw + value[leaf_of]
        trees.add(binned, f, b, left, right, value)
        train_loss.append(log_loss(yf, raw))
        if hold_idx is not None:
            one = _TreeCollector()
            one.add(binned, f, b, left, right, value)
            raw_h = raw_h + one.build().predict_sum(Xh)
            cur = log_loss(y[hold_idx], raw_h)
            hold_loss.append(cur)
            improved = cur < best
        else:
            cur = train_loss[-1]
            improved = cur < best - tol
        if improved:
            best, best_it, since = cur, it + 1, 0
        else:
            since += 1
            if early_stopping and since >= patience:
                break
    if not early_stopping:
        best_it = len(trees.parts)
    stack = trees.build() if trees.parts else TreeStack.empty()
    stack = stack.head(min(best_it, stack.n_trees))
    return GBDTModel(stack, base, best_it, train_loss, hold_loss)


def gbdt_proba(model: GBDTModel, X) -> np.ndarray:
    return _sigmoid(model.raw(X))
