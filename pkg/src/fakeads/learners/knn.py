"""Brute-force k-nearest neighbours on scaled inputs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

_CHUNK_ELEMS = 4_000_000


@dataclass
class KNNModel:
    points: object  # dense array or CSR
    labels: np.ndarray
    k: int
    weighted: bool


def fit_knn(Z, y, k=5, weighted=False) -> KNNModel:
    return KNNModel(Z, np.asarray(y, dtype=np.int64), int(k), bool(weighted))


def pairwise_distances(Q, P) -> np.ndarray:
    """Euclidean distances; exact differences for dense inputs."""
    if sp.issparse(Q) or sp.issparse(P):
        Q = sp.csr_matrix(Q)
        P = sp.csr_matrix(P)
        qq = np.asarray(Q.multiply(Q).sum(axis=1)).ravel()
        pp = np.asarray(P.multiply(P).sum(axis=1)).ravel()
        d2 = qq[:, None] + pp[None, :] - 2.0 * (Q @ P.T).toarray()
        return np.sqrt(np.maximum(d2, 0.0))
    Q = np.asarray(Q, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    out = np.empty((Q.shape[0], P.shape[0]))
    step = max(1, _CHUNK_ELEMS // max(1, P.shape[0] * max(P.shape[1], 1)))
    for s in range(0, Q.shape[0], step):
        diff = Q[s:s + step, None, :] - P[None, :, :]
        out[s:s + step] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def neighbours(model: KNNModel, Z):
    """Indices and distances of the k nearest training points (ties: lower index)."""
    D = pairwise_distances(Z, model.points)
    k = min(model.k, D.shape[1])
    idx = np.argsort(D, axis=1, kind="stable")[:, :k]
    return idx, np.take_along_axis(D, idx, axis=1)


def knn_proba(model: KNNModel, Z) -> np.ndarray:
    idx, dist = neighbours(model, Z)
    lab = model.labels[idx].astype(np.float64)
    if not model.weighted:
        return lab.mean(axis=1)
    zero = dist == 0.0
    # any exact match: vote uniformly among the exact matches only
    w = np.where(zero.any(axis=1, keepdims=True), zero.astype(float), 1.0 / np.where(zero, 1.0, dist))
    return (w * lab).sum(axis=1) / w.sum(axis=1)
