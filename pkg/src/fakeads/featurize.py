"""Numeric feature matrix from assembled listing records."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

NUMERIC = "numeric"
CATEGORICAL = "categorical-code"
TEXT_STAT = "text-stat"
NGRAM = "ngram-count"

TEXT, BASIC, REFINED, SPATIAL = "text", "basic", "refined", "spatial"
FEATURE_SETS = (TEXT, BASIC, REFINED, SPATIAL)

NUMERIC_FIELDS = ("price", "area", "road_width")
CATEGORICAL_FIELDS = ("house_type", "road", "district", "road_first", "road_second", "road_third")
TEXT_STAT_NAMES = ("char_count", "word_count", "special_symbol_count", "special_symbol_ratio", "digit_ratio")
TAGS = {
    "price": BASIC, "area": BASIC, "road": BASIC, "district": BASIC,
    "house_type": REFINED, "road_width": REFINED,
    "road_first": SPATIAL, "road_second": SPATIAL, "road_third": SPATIAL,
}
DESCRIPTION_GROUP = "description"

_TOKEN = re.compile(r"[^\W_]+")


class FeaturizeError(ValueError):
    pass


class EmptyCorpus(FeaturizeError):
    pass


class NotFitted(FeaturizeError):
    pass


@dataclass(frozen=True)
class FeaturizerConfig:
    ngram_min: int = 1
    ngram_max: int = 3
    max_vocab: int = 10_000
    vocab_budget_ratio: float = 0.15
    total_budget_bytes: int = 2_400_000_000
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.ngram_min <= self.ngram_max:
            raise ValueError("need 1 <= ngram_min <= ngram_max")
        if self.max_vocab <= 0:
            raise ValueError("max_vocab must be positive")
        if not 0 < self.vocab_budget_ratio <= 1:
            raise ValueError("vocab_budget_ratio must be in (0, 1]")


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    tag: str


# Rough per-entry cost of a Python dict entry holding an n-gram and its index.
_ENTRY_OVERHEAD = 120
_INDEX_OVERHEAD = 64


def ngram_bytes(ngram: str) -> int:
    return len(ngram.encode("utf-8")) + _ENTRY_OVERHEAD


@dataclass
class Vocabulary:
    index: dict  # ngram -> column
    df: dict  # ngram -> document frequency
    ngram_min: int = 1
    ngram_max: int = 3
    total_budget_bytes: int = 0

    def __len__(self):
        return len(self.index)

    @property
    def ngrams(self) -> list:
        return sorted(self.index, key=self.index.__getitem__)

    def estimated_bytes(self) -> int:
        return _INDEX_OVERHEAD + sum(ngram_bytes(g) for g in self.index)


def tokenize(text: str) -> list:
    return _TOKEN.findall(text.lower())


def doc_ngrams(tokens: Sequence[str], lo: int, hi: int):
    for n in range(lo, hi + 1):
        for i in range(len(tokens) - n + 1):
            yield " ".join(tokens[i:i + n])


def build_vocabulary(descriptions, cfg: FeaturizerConfig | None = None) -> Vocabulary:
    """Rank word n-grams by document frequency and keep the most frequent.

    Ties break lexicographically. The list is cut to ``max_vocab`` and then
    shortened further, least frequent first, until the storage estimate fits
    in ``vocab_budget_ratio * total_budget_bytes``.
    """
    cfg = cfg or FeaturizerConfig()
    descriptions = list(descriptions)
    if not descriptions:
        raise EmptyCorpus("no descriptions to build a vocabulary from")
    df = Counter()
    for text in descriptions:
        df.update(set(doc_ngrams(tokenize(text), cfg.ngram_min, cfg.ngram_max)))
    ranked = sorted(df, key=lambda g: (-df[g], g))[: cfg.max_vocab]
    budget = cfg.vocab_budget_ratio * cfg.total_budget_bytes
    used = _INDEX_OVERHEAD + sum(ngram_bytes(g) for g in ranked)
    while ranked and used > budget:
        used -= ngram_bytes(ranked.pop())
    return Vocabulary(
        index={g: i for i, g in enumerate(ranked)},
        df={g: df[g] for g in ranked},
        ngram_min=cfg.ngram_min,
        ngram_max=cfg.ngram_max,
        total_budget_bytes=cfg.total_budget_bytes,
    )


def text_stats(description: str) -> np.ndarray:
    n = len(description)
    words = len(description.split())
    special = sum(1 for ch in description if not ch.isalnum() and not ch.isspace())
    digits = sum(1 for ch in description if ch.isdigit())
    if n == 0:
        return np.zeros(5)
    return np.array([n, words, special, special / n, digits / n], dtype=float)


@dataclass
class CategoryEncoder:
    maps: dict = field(default_factory=dict)  # feature -> {value: code}
    unknown_code: int = -1

    def fit(self, records, fields=CATEGORICAL_FIELDS) -> "CategoryEncoder":
        for f in fields:
            m = self.maps.setdefault(f, {})
            for rec in records:
                v = str(getattr(rec, f))
                if v not in m:
                    m[v] = len(m)
        return self

    def code(self, feature: str, value) -> int:
        return self.maps[feature].get(str(value), self.unknown_code)


@dataclass
class FeatureMatrix:
    """Rows are listings; ``X`` is a CSR matrix of finite floats."""

    X: sp.csr_matrix
    columns: list

    def __post_init__(self):
        if not sp.isspmatrix_csr(self.X):
            self.X = sp.csr_matrix(self.X, dtype=np.float64)
        if self.X.shape[1] != len(self.columns):
            raise FeaturizeError(f"{self.X.shape[1]} columns but {len(self.columns)} metadata entries")

    @property
    def shape(self):
        return self.X.shape

    @property
    def names(self) -> list:
        return [c.name for c in self.columns]

    def __len__(self):
        return self.X.shape[0]

    def toarray(self) -> np.ndarray:
        return self.X.toarray()

    def rows(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.X[np.asarray(idx)], self.columns)

    def select(self, keep) -> "FeatureMatrix":
        keep = np.asarray(keep)
        return FeatureMatrix(self.X[:, keep].tocsr(), [self.columns[i] for i in keep])

    def drop_tags(self, tags) -> "FeatureMatrix":
        tags = set(tags)
        return self.select([i for i, c in enumerate(self.columns) if c.tag not in tags])

    def hstack(self, other: "FeatureMatrix") -> "FeatureMatrix":
        if other.X.shape[0] != self.X.shape[0]:
            raise FeaturizeError("row count mismatch")
        return FeatureMatrix(sp.hstack([self.X, other.X], format="csr"), self.columns + other.columns)

    def column_groups(self) -> dict:
        """Permutation groups: one per tabular column, description columns together."""
        groups = {}
        for i, c in enumerate(self.columns):
            key = DESCRIPTION_GROUP if c.kind in (TEXT_STAT, NGRAM) else c.name
            groups.setdefault(key, []).append(i)
        return groups

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.X.data)))


def from_dense(X, names=None, kind=NUMERIC, tag=BASIC) -> FeatureMatrix:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    names = names or [f"x{i}" for i in range(X.shape[1])]
    return FeatureMatrix(sp.csr_matrix(X), [Column(n, kind, tag) for n in names])


def as_matrix(X) -> FeatureMatrix:
    return X if isinstance(X, FeatureMatrix) else from_dense(X)


@dataclass
class Featurizer:
    cfg: FeaturizerConfig = field(default_factory=FeaturizerConfig)
    vocab: Vocabulary | None = None
    encoder: CategoryEncoder | None = None

    def fit(self, records) -> "Featurizer":
        records = list(records)
        self.vocab = build_vocabulary([r.description for r in records], self.cfg)
        self.encoder = CategoryEncoder().fit(records)
        return self

    def fit_transform(self, records) -> FeatureMatrix:
        records = list(records)
        return self.fit(records).transform(records)

    def columns(self) -> list:
        cols = [Column(f, NUMERIC, TAGS[f]) for f in NUMERIC_FIELDS]
        cols += [Column(f, CATEGORICAL, TAGS[f]) for f in CATEGORICAL_FIELDS]
        cols += [Column(s, TEXT_STAT, TEXT) for s in TEXT_STAT_NAMES]
        cols += [Column("ngram:" + g, NGRAM, TEXT) for g in self.vocab.ngrams]
        return cols

    def transform(self, records) -> FeatureMatrix:
        if self.vocab is None or self.encoder is None:
            raise NotFitted("featurizer must be fitted before transform")
        records = list(records)
        n_dense = len(NUMERIC_FIELDS) + len(CATEGORICAL_FIELDS) + len(TEXT_STAT_NAMES)
        dense = np.zeros((len(records), n_dense))
        indptr, indices, data = [0], [], []
        lo, hi = self.vocab.ngram_min, self.vocab.ngram_max
        for i, rec in enumerate(records):
            row = [float(getattr(rec, f)) for f in NUMERIC_FIELDS]
            row += [self.encoder.code(f, getattr(rec, f)) for f in CATEGORICAL_FIELDS]
            dense[i] = row + list(text_stats(rec.description))
            counts = Counter(
                self.vocab.index[g] for g in doc_ngrams(tokenize(rec.description), lo, hi) if g in self.vocab.index
            )
            for j in sorted(counts):
                indices.append(j + n_dense)
                data.append(float(counts[j]))
            indptr.append(len(indices))
        ngrams = sp.csr_matrix(
            (np.asarray(data, dtype=float), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
            shape=(len(records), n_dense + len(self.vocab)),
        )
        d = sp.coo_matrix(dense)
        X = (sp.csr_matrix((d.data, (d.row, d.col)), shape=ngrams.shape) + ngrams).tocsr()
        X.sort_indices()
        fm = FeatureMatrix(X, self.columns())
        if not fm.is_finite():
            raise FeaturizeError("non-finite feature values")
        return fm


def fit_transform(train_records, cfg: FeaturizerConfig | None = None):
    """Fit on the training split; returns (matrix, vocabulary, encoder)."""
    fz = Featurizer(cfg or FeaturizerConfig())
    X = fz.fit_transform(train_records)
    return X, fz.vocab, fz.encoder


def transform(records, vocab: Vocabulary | None, encoder: CategoryEncoder | None) -> FeatureMatrix:
    if vocab is None or encoder is None:
        raise NotFitted("transform needs a fitted vocabulary and encoder")
    fz = Featurizer(FeaturizerConfig(ngram_min=vocab.ngram_min, ngram_max=vocab.ngram_max), vocab, encoder)
    return fz.transform(records)
