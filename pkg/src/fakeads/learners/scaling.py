"""Input preparation for the distance and network learners.

Trees split on raw values, but KNN and the MLP need comparable scales. Numeric
columns are sign-log compressed and standardized, categorical codes are one-hot
encoded and n-gram counts are log-compressed. Description columns are left out
whenever tabular columns exist; with a few thousand rows they drown out the
price structure for both learners.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..featurize import CATEGORICAL, NGRAM, NUMERIC, TEXT_STAT, as_matrix


def _signlog(a):
    return np.sign(a) * np.log1p(np.abs(a))


@dataclass
class InputScaler:
    scaled: np.ndarray  # column indices, sign-log + standardize
    mean: np.ndarray
    std: np.ndarray
    onehot: list  # (column index, sorted observed codes)
    ngrams: np.ndarray  # column indices, log1p, kept sparse
    n_in: int

    @property
    def n_out(self) -> int:
        return len(self.scaled) + sum(len(c) for _, c in self.onehot) + len(self.ngrams)

    @classmethod
    def fit(cls, X, text_when_tabular: bool = False) -> "InputScaler":
        X = as_matrix(X)
        kinds = [c.kind for c in X.columns]
        tabular = [i for i, k in enumerate(kinds) if k in (NUMERIC, CATEGORICAL)]
        use_text = text_when_tabular or not tabular
        scaled = [i for i, k in enumerate(kinds) if k == NUMERIC or (use_text and k == TEXT_STAT)]
        cats = [i for i, k in enumerate(kinds) if k == CATEGORICAL]
        ngrams = [i for i, k in enumerate(kinds) if use_text and k == NGRAM]
        scaled = np.asarray(scaled, dtype=np.int64)
        Z = _signlog(X.X[:, scaled].toarray()) if len(scaled) else np.zeros((len(X), 0))
        mean = Z.mean(axis=0) if len(Z) else np.zeros(Z.shape[1])
        std = Z.std(axis=0) if len(Z) else np.ones(Z.shape[1])
        std = np.where(std > 1e-12, std, 1.0)
        onehot = []
        for i in cats:
            codes = np.unique(X.X[:, i].toarray().ravel())
            onehot.append((i, codes))
        return cls(scaled, mean, std, onehot, np.asarray(ngrams, dtype=np.int64), X.shape[1])

    def transform(self, X):
        """Dense array for tabular inputs, CSR once n-gram columns are involved."""
        X = as_matrix(X)
        if X.shape[1] != self.n_in:
            raise ValueError(f"scaler fitted on {self.n_in} columns, got {X.shape[1]}")
        n = len(X)
        parts = []
        if len(self.scaled):
            parts.append((_signlog(X.X[:, self.scaled].toarray()) - self.mean) / self.std)
        for i, codes in self.onehot:
            v = X.X[:, i].toarray().ravel()
            pos = np.searchsorted(codes, v)
            pos = np.minimum(pos, len(codes) - 1)
            hit = codes[pos] == v
            M = np.zeros((n, len(codes)))
            M[np.flatnonzero(hit), pos[hit]] = 1.0  # unseen codes stay all-zero
            parts.append(M)
        dense = np.hstack(parts) if parts else np.zeros((n, 0))
        if not len(self.ngrams):
            return dense
        G = X.X[:, self.ngrams].tocsr().astype(np.float64)
        G.data = np.log1p(G.data)
        return sp.hstack([sp.csr_matrix(dense), G], format="csr")

