"""Metrics, permutation importance, feature-set ablation and report tables.

Fake is the positive class throughout.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from . import ensemble as E
from . import learners as L
from .featurize import BASIC, NUMERIC, REFINED, SPATIAL, Column, FeatureMatrix, as_matrix

log = logging.getLogger(__name__)

METRIC_NAMES = ("precision", "recall", "f1", "accuracy", "fpr", "fnr")
ABLATION_ORDER = (SPATIAL, REFINED, BASIC)


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise EvalError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def _binary(a, what):
    try:
        return L.as_labels(a)
    except ValueError as exc:
        raise EvalError(f"{what}: {exc}") from None


def confusion(predictions, labels) -> ConfusionCounts:
    p = _binary(predictions, "predictions")
    y = _binary(labels, "labels")
    if p.shape != y.shape:
        raise EvalError(f"{len(p)} predictions for {len(y)} labels")
    return ConfusionCounts(tp=int(np.sum((p == 1) & (y == 1))), tn=int(np.sum((p == 0) & (y == 0))),
                           fp=int(np.sum((p == 1) & (y == 0))), fn=int(np.sum((p == 0) & (y == 1))))


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    accuracy: float
    fpr: float
    fnr: float
    counts: ConfusionCounts
    undefined: tuple = ()  # metrics whose ratio was 0/0 and reported as 0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["undefined"] = list(self.undefined)
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)


def _ratio(num, den, name, undefined):
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def metrics(c: ConfusionCounts) -> MetricsReport:
    if c.total <= 0:
        raise EvalError("no evaluated records")
    und = []
    p = _ratio(c.tp, c.tp + c.fp, "precision", und)
    r = _ratio(c.tp, c.tp + c.fn, "recall", und)
    f1 = _ratio(2 * p * r, p + r, "f1", und)
    acc = (c.tp + c.tn) / c.total
    fpr = _ratio(c.fp, c.fp + c.tn, "fpr", und)
    fnr = _ratio(c.fn, c.fn + c.tp, "fnr", und)
    return MetricsReport(p, r, f1, acc, fpr, fnr, c, tuple(und))


def evaluate(predictions, labels) -> MetricsReport:
    return metrics(confusion(predictions, labels))


# -- permutation importance ----------------------------------------------------

@dataclass
class ImportanceReport:
    baseline_accuracy: float
    n_shuffles: int
    importance: dict = field(default_factory=dict)  # group -> mean accuracy drop
    std: dict = field(default_factory=dict)
    drops: dict = field(default_factory=dict)  # group -> per-shuffle drops

    def ranking(self) -> list:
        return sorted(self.importance, key=lambda g: (-self.importance[g], g))

    def as_dict(self) -> dict:
        return {"baseline_accuracy": self.baseline_accuracy, "n_shuffles": self.n_shuffles,
                "features": [{"feature": g, "importance": self.importance[g], "std": self.std[g],
                              "drops": self.drops[g]} for g in self.ranking()]}


def _predictor(model):
    if isinstance(model, E.StackedEnsemble):
        return lambda X: E.predict_fake(model, X)
    if isinstance(model, L.TrainedModel):
        return lambda X: L.predict_fake(model, X)
    if callable(model):
        return model
    raise TypeError(f"cannot predict with {type(model).__name__}")


def permute_columns(X: FeatureMatrix, cols, perm) -> FeatureMatrix:
    """Copy of X whose columns ``cols`` take their values from rows ``perm``."""
    mask = np.zeros(X.shape[1])
    mask[np.asarray(cols)] = 1.0
    keep = X.X @ sp.diags(1.0 - mask)
    moved = X.X[perm] @ sp.diags(mask)
    out = (keep + moved).tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    return FeatureMatrix(out, X.columns)


def with_noise_column(X, seed=0, name="noise") -> FeatureMatrix:
    """X plus one standard-normal numeric column: a control for importance."""
    X = as_matrix(X)
    z = np.random.default_rng(seed).standard_normal((len(X), 1))
    return X.hstack(FeatureMatrix(sp.csr_matrix(z), [Column(name, NUMERIC, BASIC)]))


def permutation_importance(model, X, labels, n_shuffles=5, seed=0, groups=None) -> ImportanceReport:
    """Accuracy drop when one column group is shuffled across rows.

    Tabular columns are their own groups; the description columns (text
    statistics and n-grams) move together under one shared row permutation.
    """
    if n_shuffles < 1:
        raise EvalError("n_shuffles must be >= 1")
    X = as_matrix(X)
    y = _binary(labels, "labels")
    if len(X) == 0:
        raise EvalError("empty test matrix")
    predict = _predictor(model)
    base = float(np.mean(L.predict_label(predict(X)) == y))
    groups = groups or X.column_groups()
    rep = ImportanceReport(base, n_shuffles)
    for gi, (name, cols) in enumerate(groups.items()):
        rng = np.random.default_rng([seed, gi])
        drops = []
        for _ in range(n_shuffles):
            Xp = permute_columns(X, cols, rng.permutation(len(X)))
            drops.append(base - float(np.mean(L.predict_label(predict(Xp)) == y)))
        rep.drops[name] = drops
        rep.importance[name] = float(np.mean(drops))
        rep.std[name] = float(np.std(drops))
    return rep


# -- ablation --------------------------------------------------------------------

@dataclass
class AblationRow:
    label: str
    removed: tuple
    n_columns: int
    report: MetricsReport
    retrained: bool = True

    def as_dict(self) -> dict:
        return {"label": self.label, "removed": list(self.removed), "n_columns": self.n_columns,
                "retrained": self.retrained, "metrics": self.report.as_dict()}


def ablation(X_train, y_train, X_test, y_test, cfg: E.StackConfig | None = None,
             feature_set_order=ABLATION_ORDER) -> list:
    """Retrain and score with feature sets removed cumulatively in the given order.

    A removal that drops no columns repeats the previous row instead of
    retraining an identical stack.
    """
    cfg = cfg or E.StackConfig()
    X_train, X_test = as_matrix(X_train), as_matrix(X_test)
    rows = []
    removed = []
    prev_cols = None
    for step in [None, *feature_set_order]:
        if step is not None:
            removed.append(step)
        tr = X_train.drop_tags(removed)
        if tr.shape[1] == 0:
            raise EvalError(f"no columns left after removing {removed}")
        label = "full" if not removed else "-" + " -".join(removed)
        if prev_cols == tr.names:
            rows.append(AblationRow(label, tuple(removed), tr.shape[1], rows[-1].report, retrained=False))
            continue
        te = X_test.drop_tags(removed)
        ens = E.train_stack(tr, y_train, cfg)
        pred, _ = E.predict(ens, te)
        rows.append(AblationRow(label, tuple(removed), tr.shape[1], evaluate(pred, y_test)))
        log.info("ablation %s: accuracy %.4f", label, rows[-1].report.accuracy)
        prev_cols = tr.names
    return rows


# -- text tables -----------------------------------------------------------------

def format_table(rows, columns, floatfmt="{:.4f}") -> str:
    """Aligned plain-text table; ``columns`` is a list of (header, key)."""
    def cell(v):
        if isinstance(v, float):
            return floatfmt.format(v)
        return "-" if v is None else str(v)

    body = [[cell(r.get(k)) for _, k in columns] for r in rows]
    heads = [h for h, _ in columns]
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(heads)]
    line = lambda cells: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    out = [line(heads), "  ".join("-" * w for w in widths)]
    out += [line(b) for b in body]
    return "\n".join(out)


def metrics_table(reports: dict) -> str:
    rows = [{"system": name, **{m: getattr(r, m) for m in METRIC_NAMES}} for name, r in reports.items()]
    return format_table(rows, [("system", "system")] + [(m, m) for m in METRIC_NAMES])


def leaderboard_table(ens: E.StackedEnsemble) -> str:
    return format_table(ens.leaderboard(), [("rank", "rank"), ("model", "model"), ("layer", "layer"),
                                            ("val_accuracy", "val_accuracy"), ("weight", "weight"),
                                            ("fit_s", "fit_seconds")])


def ablation_table(rows) -> str:
    data = [{"features": r.label, "columns": r.n_columns, **{m: getattr(r.report, m) for m in METRIC_NAMES}}
            for r in rows]
    return format_table(data, [("features", "features"), ("columns", "columns")] + [(m, m) for m in METRIC_NAMES])


def importance_table(rep: ImportanceReport) -> str:
    rows = [{"feature": g, "importance": rep.importance[g], "std": rep.std[g]} for g in rep.ranking()]
    return format_table(rows, [("feature", "feature"), ("importance", "importance"), ("std", "std")])
