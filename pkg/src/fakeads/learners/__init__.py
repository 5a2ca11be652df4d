"""Base learners of the stack: trees, forests, boosting, KNN and an MLP.

``fit(spec, X, y)`` returns an immutable :class:`TrainedModel`;
``predict_proba(model, X)`` returns an (n, 2) array of (p_real, p_fake).
Labels are 0 = real, 1 = fake (strings "real"/"fake" are accepted too).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from types import MappingProxyType

import numpy as np

from ..featurize import FeatureMatrix, as_matrix
from . import knn as _knn
from . import mlp as _mlp
from . import trees as _trees
from .scaling import InputScaler


class LearnerError(Exception):
    pass


class DegenerateLabels(LearnerError, ValueError):
    pass


class SpecError(LearnerError, ValueError):
    pass


class SchemaError(LearnerError, ValueError):
    pass


_FOREST = dict(n_trees=300, max_features="sqrt", max_depth=0, min_samples_leaf=1)
_GBDT = dict(learning_rate=0.05, n_trees=10_000, max_leaves=31, max_depth=0, min_samples_leaf=20,
             min_child_weight=1e-3, reg_lambda=1.0, colsample=1.0, early_stopping=True,
             validation_fraction=0.1, patience=50)

DEFAULTS = {
    "decision_tree": dict(criterion="gini", max_depth=0, min_samples_leaf=1),
    "random_forest_gini": _FOREST,
    "random_forest_entropy": _FOREST,
    "extra_trees_gini": _FOREST,
    "extra_trees_entropy": _FOREST,
    "knn_uniform": dict(k=5),
    "knn_distance": dict(k=5),
    "gbdt": _GBDT,
    "gbdt_large": {**_GBDT, "learning_rate": 0.03, "max_leaves": 128, "colsample": 0.9},
    "gbdt_xt": _GBDT,
    "mlp": dict(hidden=(128, 128, 128, 128), learning_rate=3e-4, weight_decay=1e-6, max_epochs=500,
                patience=20, batch_size=256, validation_fraction=0.1),
}
KINDS = tuple(DEFAULTS)


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0
    name: str | None = None

    @property
    def label(self) -> str:
        return self.name or self.kind

    def resolved(self) -> dict:
        """Kind defaults overlaid with the explicit hyperparameters, validated."""
        if self.kind not in DEFAULTS:
            raise SpecError(f"unknown learner kind {self.kind!r}")
        hp = dict(DEFAULTS[self.kind])
        unknown = set(self.hyperparameters) - set(hp)
        if unknown:
            raise SpecError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        hp.update(self.hyperparameters)
        _validate(self.kind, hp)
        return hp

    def with_seed(self, seed: int) -> "LearnerSpec":
        return replace(self, seed=int(seed))


def _validate(kind, hp):
    def need(cond, msg):
        if not cond:
            raise SpecError(f"{kind}: {msg}")

    def is_int(v):
        return isinstance(v, (int, np.integer)) and not isinstance(v, bool)

    if "n_trees" in hp:
        need(is_int(hp["n_trees"]) and hp["n_trees"] >= 1, "n_trees must be an integer >= 1")
    if "max_depth" in hp:
        need(is_int(hp["max_depth"]) and hp["max_depth"] >= 0, "max_depth must be >= 0 (0 = unlimited)")
    if "min_samples_leaf" in hp:
        need(hp["min_samples_leaf"] >= 1, "min_samples_leaf must be >= 1")
    if "criterion" in hp:
        need(hp["criterion"] in _trees.CRITERIA, "criterion must be gini or entropy")
    if "max_features" in hp:
        mf = hp["max_features"]
        ok = mf in ("sqrt", "log2") or (isinstance(mf, float) and 0 < mf <= 1) or (is_int(mf) and mf >= 1)
        need(ok, "max_features must be 'sqrt', 'log2', a fraction in (0, 1] or a positive integer")
    if "k" in hp:
        need(is_int(hp["k"]) and hp["k"] >= 1, "k must be an integer >= 1")
    if "learning_rate" in hp:
        need(hp["learning_rate"] > 0, "learning_rate must be > 0")
    if "max_leaves" in hp:
        need(is_int(hp["max_leaves"]) and (hp["max_leaves"] >= 2 or hp["max_leaves"] == 0),
             "max_leaves must be >= 2, or 0 for no limit")
        need(hp["max_leaves"] > 0 or hp["max_depth"] > 0, "boosted trees need max_leaves or max_depth")
    if "colsample" in hp:
        need(0 < hp["colsample"] <= 1, "colsample must be in (0, 1]")
    if "reg_lambda" in hp:
        need(hp["reg_lambda"] >= 0, "reg_lambda must be >= 0")
    if "validation_fraction" in hp:
        need(0 < hp["validation_fraction"] < 0.5, "validation_fraction must be in (0, 0.5)")
    if "patience" in hp:
        need(is_int(hp["patience"]) and hp["patience"] >= 1, "patience must be >= 1")
    if "hidden" in hp:
        need(len(hp["hidden"]) >= 1 and all(is_int(h) and h >= 1 for h in hp["hidden"]),
             "hidden must list positive layer widths")
    if "batch_size" in hp:
        need(is_int(hp["batch_size"]) and hp["batch_size"] >= 1, "batch_size must be >= 1")
    if "max_epochs" in hp:
        need(is_int(hp["max_epochs"]) and hp["max_epochs"] >= 1, "max_epochs must be >= 1")
    if "weight_decay" in hp:
        need(hp["weight_decay"] >= 0, "weight_decay must be >= 0")


# The roster: one preset per row of the boosting/forest/KNN/network settings.
PRESETS = MappingProxyType({
    "random_forest_gini": LearnerSpec("random_forest_gini"),
    "random_forest_entropy": LearnerSpec("random_forest_entropy"),
    "extra_trees_gini": LearnerSpec("extra_trees_gini"),
    "extra_trees_entropy": LearnerSpec("extra_trees_entropy"),
    "knn_uniform": LearnerSpec("knn_uniform"),
    "knn_distance": LearnerSpec("knn_distance"),
    "gbdt": LearnerSpec("gbdt"),
    "gbdt_xgb": LearnerSpec("gbdt", {"learning_rate": 0.1, "max_depth": 6, "max_leaves": 0}, name="gbdt_xgb"),
    "gbdt_large": LearnerSpec("gbdt_large"),
    "gbdt_xt": LearnerSpec("gbdt_xt"),
    "mlp": LearnerSpec("mlp"),
})


def preset(name: str, seed: int = 0) -> LearnerSpec:
    if name not in PRESETS:
        raise SpecError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}")
    spec = PRESETS[name]
    return replace(spec, seed=int(seed), name=spec.name or name)


def default_roster(seed: int = 0) -> list:
    return [preset(n, seed) for n in PRESETS]


@dataclass(frozen=True)
class TrainedModel:
    spec: LearnerSpec
    params: object
    n_features: int
    columns: tuple | None
    fit_seconds: float
    seed: int

    @property
    def name(self) -> str:
        return self.spec.label


def as_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.dtype.kind in "UO":
        bad = set(y.tolist()) - {"real", "fake"}
        if bad:
            raise ValueError(f"labels must be 'real' or 'fake', got {sorted(bad)[:3]}")
        return (y == "fake").astype(np.int64)
    if y.size and not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary (0 = real, 1 = fake)")
    return y.astype(np.int64)


def _check_inputs(X: FeatureMatrix, y):
    if len(X) != len(y):
        raise ValueError(f"{len(X)} rows but {len(y)} labels")
    if len(y) < 2:
        raise DegenerateLabels("need at least two rows")
    if not X.is_finite():
        raise ValueError("feature matrix has non-finite values")
    if np.all(y == y[0]):
        raise DegenerateLabels("training labels contain a single class")


def fit(spec: LearnerSpec, X, y) -> TrainedModel:
    hp = spec.resolved()
    X = as_matrix(X)
    y = as_labels(y)
    _check_inputs(X, y)
    t0 = time.perf_counter()
    kind, seed = spec.kind, int(spec.seed)
    if kind == "decision_tree":
        params = _trees.fit_forest(X, y, n_trees=1, criterion=hp["criterion"], bootstrap=False,
                                   max_features=None, max_depth=hp["max_depth"],
                                   min_samples_leaf=hp["min_samples_leaf"], seed=seed)
    elif kind.startswith(("random_forest", "extra_trees")):
        extra = kind.startswith("extra")
        params = _trees.fit_forest(X, y, n_trees=hp["n_trees"], criterion=kind.rsplit("_", 1)[1],
                                   bootstrap=not extra, random_splits=extra,
                                   max_features=hp["max_features"], max_depth=hp["max_depth"],
                                   min_samples_leaf=hp["min_samples_leaf"], seed=seed)
    elif kind.startswith("gbdt"):
        params = _trees.fit_gbdt(X, y, random_splits=kind == "gbdt_xt", seed=seed, **hp)
    elif kind.startswith("knn"):
        scaler = InputScaler.fit(X)
        params = (scaler, _knn.fit_knn(scaler.transform(X), y, hp["k"], weighted=kind == "knn_distance"))
    else:  # mlp
        scaler = InputScaler.fit(X)
        Z = scaler.transform(X)
        net, hist = _mlp.fit_mlp(Z, y, hidden=tuple(hp["hidden"]), learning_rate=hp["learning_rate"],
                                 weight_decay=hp["weight_decay"], max_epochs=hp["max_epochs"],
                                 patience=hp["patience"], batch_size=hp["batch_size"],
                                 holdout=_trees.stratified_tail(y, hp["validation_fraction"]), seed=seed)
        params = (scaler, net, hist)
    cols = tuple(X.names)
    return TrainedModel(spec, params, X.shape[1], cols, time.perf_counter() - t0, seed)


def _check_schema(model: TrainedModel, X: FeatureMatrix):
    if X.shape[1] != model.n_features:
        raise SchemaError(f"model {model.name} expects {model.n_features} columns, got {X.shape[1]}")
    if model.columns is not None and tuple(X.names) != model.columns:
        raise SchemaError(f"model {model.name}: column names differ from training")


def predict_fake(model: TrainedModel, X) -> np.ndarray:
    """p(fake) per row."""
    X = as_matrix(X)
    _check_schema(model, X)
    kind = model.spec.kind
    if kind == "decision_tree" or kind.startswith(("random_forest", "extra_trees")):
        p = _trees.forest_proba(model.params, X)
    elif kind.startswith("gbdt"):
        p = _trees.gbdt_proba(model.params, X)
    elif kind.startswith("knn"):
        scaler, km = model.params
        p = _knn.knn_proba(km, scaler.transform(X))
    else:
        scaler, net, _ = model.params
        p = net.proba(scaler.transform(X))[:, 1]
    return np.clip(p, 0.0, 1.0)


def predict_proba(model: TrainedModel, X) -> np.ndarray:
    p = predict_fake(model, X)
    return np.column_stack([1.0 - p, p])


def predict_label(p_fake) -> np.ndarray:
    """Hard labels; a probability of exactly 0.5 goes to fake."""
    return (np.asarray(p_fake) >= 0.5).astype(np.int64)


def gradient_check(model, X, y, epsilon=1e-5) -> float:
    """Finite-difference check of the MLP gradients; accepts a net or a trained mlp."""
    if isinstance(model, TrainedModel):
        scaler, net, _ = model.params
        X = scaler.transform(as_matrix(X))
    else:
        net = model
    return _mlp.gradient_check(net, X, as_labels(y), epsilon)
