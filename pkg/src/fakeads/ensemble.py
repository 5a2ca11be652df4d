"""Two-layer stacking with greedy ensemble selection.

Layer-1 learners are fit on the fit split; their out-of-fold probabilities on
the fit split (and direct probabilities on the validation split) are appended
to the original features to train layer 2. Selection then picks a weighted
average over all layer-1 and layer-2 models on the validation split.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import learners as L
from .featurize import NUMERIC, Column, FeatureMatrix, as_matrix

log = logging.getLogger(__name__)

ENSEMBLE = "weighted_ensemble"
STACK_TAG = "stack"


class StratifyError(ValueError):
    pass


class StackError(RuntimeError):
    pass


@dataclass
class StackConfig:
    roster: list = field(default_factory=L.default_roster)
    validation_fraction: float = 0.10
    selection_iterations: int = 100
    n_folds: int = 5
    selection_metric: str = "accuracy"  # or "log_loss"
    seed: int = 0

    def __post_init__(self):
        if not self.roster:
            raise ValueError("roster must not be empty")
        if not 0 < self.validation_fraction < 0.5:
            raise ValueError("validation_fraction must be in (0, 0.5)")
        if self.selection_iterations < 1:
            raise ValueError("selection_iterations must be >= 1")
        if self.n_folds < 2:
            raise ValueError("n_folds must be >= 2")
        if self.selection_metric not in ("accuracy", "log_loss"):
            raise ValueError("selection_metric must be accuracy or log_loss")
        labels = [spec.label for spec in self.roster]
        if len(set(labels)) != len(labels):
            raise ValueError(f"roster names must be unique: {labels}")
        for spec in self.roster:
            spec.resolved()  # raises SpecError early


# -- splitting ---------------------------------------------------------------

def _quotas(counts, fraction):
    """Largest-remainder allocation of round(fraction * n) rows across classes."""
    exact = np.asarray(counts, dtype=float) * fraction
    base = np.floor(exact).astype(int)
    extra = int(round(fraction * sum(counts))) - int(base.sum())
    order = sorted(range(len(counts)), key=lambda c: (-(exact[c] - base[c]), c))
    for c in order[:max(extra, 0)]:
        base[c] += 1
    return base


def stratified_split(y, fraction, seed=0):
    """Return (keep, held) index arrays; ``held`` has ~fraction of each class."""
    y = L.as_labels(y)
    classes = [np.flatnonzero(y == c) for c in (0, 1)]
    if any(len(idx) < 2 for idx in classes):
        raise StratifyError("each class needs at least 2 records to stratify")
    q = _quotas([len(idx) for idx in classes], fraction)
    rng = np.random.default_rng(seed)
    held = []
    for idx, k in zip(classes, q):
        k = min(k, len(idx) - 1)  # both sides keep every class
        held.append(rng.permutation(idx)[:k])
    held = np.sort(np.concatenate(held))
    keep = np.setdiff1d(np.arange(len(y)), held)
    return keep, held


def split_validation(y, fraction=0.10, seed=0):
    """Stratified (fit, validation) split of a training set."""
    return stratified_split(y, fraction, seed)


def stratified_folds(y, n_folds, seed=0) -> np.ndarray:
    """Fold id per row; each class is dealt round-robin after a shuffle."""
    y = L.as_labels(y)
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), np.int64)
    for c in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold[idx] = np.arange(len(idx)) % n_folds
    return fold


# -- selection ---------------------------------------------------------------

def _accuracy(p, y):
    return float(np.mean((p >= 0.5).astype(np.int64) == y))


def _neg_log_loss(p, y):
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def select_ensemble(val_probs, val_labels, iterations=100, metric="accuracy") -> np.ndarray:
    """Greedy forward selection with replacement; returns weights per candidate.

    Starts from the best single candidate, then repeatedly adds the candidate
    whose inclusion scores best (ties to the lowest index). The weights are
    the selection counts of the best-scoring prefix of that path, so the
    result never scores below the best single candidate.
    """
    P = np.atleast_2d(np.asarray(val_probs, dtype=np.float64))
    y = L.as_labels(val_labels)
    m = P.shape[0]
    score = _accuracy if metric == "accuracy" else _neg_log_loss
    singles = [score(P[i], y) for i in range(m)]
    first = int(np.argmax(singles))  # first maximum: lowest index
    counts = np.zeros(m, np.int64)
    counts[first] = 1
    total = P[first].copy()
    best_score, best_counts = singles[first], counts.copy()
    for it in range(1, iterations):
        k = it + 1
        trial = [score((total + P[i]) / k, y) for i in range(m)]
        j = int(np.argmax(trial))
        counts[j] += 1
        total += P[j]
        if trial[j] > best_score:
            best_score, best_counts = trial[j], counts.copy()
    return best_counts / best_counts.sum()


# -- the stack ---------------------------------------------------------------

@dataclass
class StackedEnsemble:
    layer1: list
    layer2: list
    weights: np.ndarray  # over candidates = layer1 + layer2, in that order
    chosen_final: str  # ENSEMBLE or a candidate name
    val_scores: dict  # candidate name (and ENSEMBLE) -> validation accuracy
    columns: tuple  # original feature names
    excluded: dict = field(default_factory=dict)  # name -> failure reason
    fit_seconds: float = 0.0

    @property
    def candidates(self) -> list:
        return [("L1", m) for m in self.layer1] + [("L2", m) for m in self.layer2]

    @property
    def candidate_names(self) -> list:
        return [_cand_name(layer, m) for layer, m in self.candidates]

    def leaderboard(self) -> list:
        rows = []
        w = dict(zip(self.candidate_names, self.weights))
        for (layer, m), name in zip(self.candidates, self.candidate_names):
            rows.append({"model": name, "layer": layer, "kind": m.spec.kind,
                         "val_accuracy": self.val_scores[name], "weight": float(w[name]),
                         "fit_seconds": round(m.fit_seconds, 3)})
        rows.append({"model": ENSEMBLE, "layer": "-", "kind": "ensemble",
                     "val_accuracy": self.val_scores[ENSEMBLE], "weight": 1.0, "fit_seconds": None})
        rows.sort(key=lambda r: (-r["val_accuracy"], r["model"] != ENSEMBLE))
        for rank, r in enumerate(rows, 1):
            r["rank"] = rank
        return rows


def _cand_name(layer, model):
    return model.name if layer == "L1" else f"{model.name}_L2"


def _augment(X: FeatureMatrix, probs: np.ndarray, names) -> FeatureMatrix:
    cols = [Column(f"stack:{n}", NUMERIC, STACK_TAG) for n in names]
    return X.hstack(FeatureMatrix(sp.csr_matrix(probs.reshape(len(X), -1)), cols))


def _try_fit(spec, X, y, excluded, tag):
    try:
        return L.fit(spec, X, y)
    except Exception as exc:  # a failing learner is dropped, not fatal
        log.warning("learner %s (%s) failed: %s", spec.label, tag, exc)
        excluded[f"{spec.label}{'' if tag == 'L1' else '_' + tag}"] = f"{type(exc).__name__}: {exc}"
        return None


def _oof(spec, X, y, folds, n_folds):
    p = np.empty(len(y))
    for f in range(n_folds):
        tr, te = np.flatnonzero(folds != f), np.flatnonzero(folds == f)
        m = L.fit(spec, X.rows(tr), y[tr])
        p[te] = L.predict_fake(m, X.rows(te))
    return p


def train_stack(X, y, cfg: StackConfig | None = None) -> StackedEnsemble:
    cfg = cfg or StackConfig()
    t0 = time.perf_counter()
    X = as_matrix(X)
    y = L.as_labels(y)
    fit_idx, val_idx = split_validation(y, cfg.validation_fraction, cfg.seed)
    Xf, yf, Xv, yv = X.rows(fit_idx), y[fit_idx], X.rows(val_idx), y[val_idx]
    n_folds = min(cfg.n_folds, int(min(np.sum(yf == 0), np.sum(yf == 1))))
    folds = stratified_folds(yf, n_folds, cfg.seed) if n_folds >= 2 else None
    excluded = {}

    layer1, oof, val1 = [], [], []
    for spec in cfg.roster:
        m = _try_fit(spec, Xf, yf, excluded, "L1")
        if m is None:
            continue
        if len(cfg.roster) > 1:
            if folds is None:
                excluded[spec.label] = "too few rows per class for out-of-fold predictions"
                continue
            try:
                oof.append(_oof(spec, Xf, yf, folds, n_folds))
            except Exception as exc:
                log.warning("learner %s failed out-of-fold: %s", spec.label, exc)
                excluded[spec.label] = f"{type(exc).__name__}: {exc}"
                continue
        layer1.append(m)
        val1.append(L.predict_fake(m, Xv))
    if not layer1:
        raise StackError(f"every learner failed: {excluded}")

    layer2, val2 = [], []
    if len(cfg.roster) > 1:
        names = [m.name for m in layer1]
        Af = _augment(Xf, np.column_stack(oof), names)
        Av = _augment(Xv, np.column_stack(val1), names)
        for spec in cfg.roster:
            m = _try_fit(spec, Af, yf, excluded, "L2")
            if m is not None:
                layer2.append(m)
                val2.append(L.predict_fake(m, Av))

    P = np.vstack(val1 + val2)
    weights = select_ensemble(P, yv, cfg.selection_iterations, cfg.selection_metric)
    ens = StackedEnsemble(layer1, layer2, weights, ENSEMBLE, {}, tuple(X.names), excluded)
    names = ens.candidate_names
    scores = {n: _accuracy(P[i], yv) for i, n in enumerate(names)}
    scores[ENSEMBLE] = _accuracy(weights @ P, yv)
    best_single = max(range(len(names)), key=lambda i: (scores[names[i]], -i))
    # the weighted ensemble wins ties
    ens.chosen_final = ENSEMBLE if scores[ENSEMBLE] >= scores[names[best_single]] else names[best_single]
    ens.val_scores = scores
    ens.fit_seconds = time.perf_counter() - t0
    return ens


def candidate_probs(ens: StackedEnsemble, X, needed=None) -> np.ndarray:
    """p(fake) of every candidate (rows of the result); skipped ones are NaN."""
    X = as_matrix(X)
    if tuple(X.names) != ens.columns:
        raise L.SchemaError("feature columns differ from the ones the ensemble was trained on")
    n1 = len(ens.layer1)
    total = n1 + len(ens.layer2)
    needed = set(range(total)) if needed is None else set(needed)
    out = np.full((total, len(X)), np.nan)
    need_l1 = set(range(n1)) if any(i >= n1 for i in needed) else {i for i in needed if i < n1}
    for i in sorted(need_l1):
        out[i] = L.predict_fake(ens.layer1[i], X)
    if any(i >= n1 for i in needed):
        A = _augment(X, out[:n1].T, [m.name for m in ens.layer1])
        for j, m in enumerate(ens.layer2):
            if n1 + j in needed:
                out[n1 + j] = L.predict_fake(m, A)
    return out


def predict_fake(ens: StackedEnsemble, X) -> np.ndarray:
    names = ens.candidate_names
    if ens.chosen_final == ENSEMBLE:
        used = np.flatnonzero(ens.weights > 0)
        P = candidate_probs(ens, X, used)
        return ens.weights[used] @ P[used]
    i = names.index(ens.chosen_final)
    return candidate_probs(ens, X, [i])[i]


def predict(ens: StackedEnsemble, X):
    """(labels, p_fake) with label 1 = fake iff p_fake >= 0.5."""
    p = predict_fake(ens, X)
    return L.predict_label(p), p
