"""Per-feature thresholds and the binned CSR layout used by the tree kernels."""
import hashlib
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numba import njit

MAX_BINS = 256


@njit(cache=True)
def _column_thresholds(indptr, data, n_rows, max_bins):
    n_feat = indptr.shape[0] - 1
    off = np.zeros(n_feat + 1, np.int64)
    parts = []
    for f in range(n_feat):
        vals = np.sort(data[indptr[f]:indptr[f + 1]])
        nnz = vals.shape[0]
        has_zero = nnz < n_rows
        # unique values, with the implicit zeros merged in
        uniq = np.empty(nnz + 1)
        nu = 0
        zero_done = not has_zero
        for v in vals:
            if not zero_done and v >= 0.0:
                if v != 0.0:
                    uniq[nu] = 0.0
                    nu += 1
                zero_done = True
            if nu == 0 or uniq[nu - 1] != v:
                uniq[nu] = v
                nu += 1
        if not zero_done:
            uniq[nu] = 0.0
            nu += 1
        if nu <= max_bins:
            thr = np.empty(max(nu - 1, 0))
            for i in range(nu - 1):
                thr[i] = 0.5 * (uniq[i] + uniq[i + 1])
        else:
            full = np.zeros(n_rows)
            full[:nnz] = vals
            full = np.sort(full)
            cut = np.empty(max_bins - 1)
            for q in range(1, max_bins):
                cut[q - 1] = full[(q * n_rows) // max_bins]
            thr = np.unique(cut)
            if thr.shape[0] > 0 and thr[-1] >= full[-1]:
                thr = thr[:-1]
        parts.append(thr)
        off[f + 1] = off[f] + thr.shape[0]
    out = np.empty(off[-1])
    for f in range(n_feat):
        out[off[f]:off[f + 1]] = parts[f]
    return out, off


@njit(cache=True)
def _bin_entries(indptr, indices, data, thr, thr_off, zero_bin):
    n = indptr.shape[0] - 1
    keep = np.zeros(indices.shape[0], np.bool_)
    b_all = np.zeros(indices.shape[0], np.int32)
    new_ptr = np.zeros(n + 1, np.int64)
    for i in range(n):
        cnt = 0
        for j in range(indptr[i], indptr[i + 1]):
            f = indices[j]
            b = np.searchsorted(thr[thr_off[f]:thr_off[f + 1]], data[j])
            if b != zero_bin[f]:
                keep[j] = True
                b_all[j] = b
                cnt += 1
        new_ptr[i + 1] = new_ptr[i] + cnt
    feat = np.empty(new_ptr[-1], np.int32)
    bins = np.empty(new_ptr[-1], np.int32)
    k = 0
    for j in range(indices.shape[0]):
        if keep[j]:
            feat[k] = indices[j]
            bins[k] = b_all[j]
            k += 1
    return new_ptr, feat, bins


@njit(cache=True)
def _transpose(indptr, feat, bins, n_feat):
    """Column-major copy of the stored entries: (col ptr, row, bin)."""
    cptr = np.zeros(n_feat + 1, np.int64)
    for j in range(feat.shape[0]):
        cptr[feat[j] + 1] += 1
    for f in range(n_feat):
        cptr[f + 1] += cptr[f]
    fill = cptr[:-1].copy()
    crow = np.empty(feat.shape[0], np.int64)
    cbin = np.empty(feat.shape[0], np.int32)
    for r in range(indptr.shape[0] - 1):
        for j in range(indptr[r], indptr[r + 1]):
            f = feat[j]
            crow[fill[f]] = r
            cbin[fill[f]] = bins[j]
            fill[f] += 1
    return cptr, crow, cbin


def as_csr(X) -> sp.csr_matrix:
    X = getattr(X, "X", X)
    X = sp.csr_matrix(X, dtype=np.float64)
    if not X.has_sorted_indices:
        X = X.copy()
        X.sort_indices()
    return X


@dataclass
class Binned:
    thresholds: np.ndarray  # concatenated, per feature
    thr_off: np.ndarray
    zero_bin: np.ndarray
    bin_off: np.ndarray  # histogram offsets, n_bins = thr count + 1
    indptr: np.ndarray
    feat: np.ndarray
    bins: np.ndarray
    cptr: np.ndarray  # the same entries by column, rows ascending
    crow: np.ndarray
    cbin: np.ndarray

    @property
    def n_features(self):
        return self.zero_bin.shape[0]

    def threshold(self, f, b) -> float:
        return float(self.thresholds[self.thr_off[f] + b])


def _digest(X: sp.csr_matrix) -> str:
    h = hashlib.sha1()
    h.update(np.asarray(X.shape, np.int64).tobytes())
    for a in (X.indptr, X.indices, X.data):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


_CACHE: "OrderedDict[str, Binned]" = OrderedDict()


def bin_matrix(X, max_bins: int = MAX_BINS) -> Binned:
    """Bin a CSR matrix; results for identical matrices are memoized."""
    X = as_csr(X)
    key = f"{max_bins}:{_digest(X)}"
    if key in _CACHE:
        _CACHE.move_to_end(key)
        return _CACHE[key]
    Xc = X.tocsc()
    Xc.sort_indices()
    thr, thr_off = _column_thresholds(Xc.indptr.astype(np.int64), Xc.data, X.shape[0], max_bins)
    n_thr = np.diff(thr_off)
    zero_bin = np.array([np.searchsorted(thr[thr_off[f]:thr_off[f + 1]], 0.0) for f in range(X.shape[1])],
                        dtype=np.int32)
    bin_off = np.zeros(X.shape[1] + 1, np.int64)
    bin_off[1:] = np.cumsum(n_thr + 1)
    indptr, feat, bins = _bin_entries(X.indptr.astype(np.int64), X.indices.astype(np.int32), X.data,
                                      thr, thr_off, zero_bin)
    cptr, crow, cbin = _transpose(indptr, feat, bins, X.shape[1])
    out = Binned(thr, thr_off, zero_bin, bin_off, indptr, feat, bins, cptr, crow, cbin)
    _CACHE[key] = out
    while len(_CACHE) > 8:
        _CACHE.popitem(last=False)
    return out
