"""Histogram tree kernels over a binned CSR matrix.

Each row stores only the (feature, bin) pairs whose bin differs from the
feature's zero bin, sorted by feature. A node histogram touches only features
present in the node's rows; the zero bin is filled in as node total minus the
stored bins, so cost scales with the node's non-zeros rather than n * d.
"""
import numpy as np
from numba import njit

GINI, ENTROPY, NEWTON = 0, 1, 2
BEST, RANDOM = 0, 1


@njit(cache=True, nogil=True)
def _lookup(indptr, idx, vals, r, f, default):
    lo = indptr[r]
    hi = indptr[r + 1]
    while lo < hi:
        mid = (lo + hi) >> 1
        g = idx[mid]
        if g < f:
            lo = mid + 1
        elif g > f:
            hi = mid
        else:
            return vals[mid]
    return default


@njit(cache=True, nogil=True)
def _score(a0, a1, c, crit, lam):
    # Larger is better; gain = score(left) + score(right) - score(parent).
    if crit == NEWTON:
        return a0 * a0 / (a1 + lam)
    if c <= 0.0:
        return 0.0
    if crit == GINI:
        return (a0 * a0 + a1 * a1) / c
    s = 0.0
    if a0 > 0.0:
        s += a0 * np.log(a0 / c)
    if a1 > 0.0:
        s += a1 * np.log(a1 / c)
    return s


@njit(cache=True, nogil=True)
def _find_split(s, e, rows, indptr, feat, bins, bin_off, zero_bin, stats, count,
                S0, S1, C, crit, splitter, max_features, min_leaf, min_child_weight, lam,
                feat_mask, hist, mark, chosen, touched, stamp,
                node, node_of, cptr, crow, cbin, plist, pn, node_nnz):
    nt = 0
    if max_features <= 0:
        # every present feature is a candidate: one pass
        for k in range(s, e):
            r = rows[k]
            g0 = stats[r, 0]
            g1 = stats[r, 1]
            c = count[r]
            for j in range(indptr[r], indptr[r + 1]):
                f = feat[j]
                if not feat_mask[f]:
                    continue
                if mark[f] != stamp:
                    mark[f] = stamp
                    touched[nt] = f
                    nt += 1
                i = 3 * (bin_off[f] + bins[j])
                hist[i] += g0
                hist[i + 1] += g1
                hist[i + 2] += c
        m = nt
    else:
        if pn >= 0:
            # features present in the node are already known
            for t in range(pn):
                touched[t] = plist[t]
            nt = pn
        else:
            for k in range(s, e):
                r = rows[k]
                for j in range(indptr[r], indptr[r + 1]):
                    f = feat[j]
                    if mark[f] != stamp and feat_mask[f]:
                        mark[f] = stamp
                        touched[nt] = f
                        nt += 1
        m = nt
        if max_features < nt:
            for t in range(max_features):
                u = t + np.random.randint(0, nt - t)
                tmp = touched[t]
                touched[t] = touched[u]
                touched[u] = tmp
            m = max_features
        col_cost = 0
        for t in range(m):
            f = touched[t]
            chosen[f] = stamp
            col_cost += cptr[f + 1] - cptr[f]
        if node_nnz < 0:
            node_nnz = 0
            for k in range(s, e):
                r = rows[k]
                node_nnz += indptr[r + 1] - indptr[r]
        if col_cost < node_nnz:
            # candidate histograms straight from the columns
            for t in range(m):
                f = touched[t]
                base = bin_off[f]
                for j in range(cptr[f], cptr[f + 1]):
                    r = crow[j]
                    if node_of[r] == node:
                        i = 3 * (base + cbin[j])
                        hist[i] += stats[r, 0]
                        hist[i + 1] += stats[r, 1]
                        hist[i + 2] += count[r]
        else:
            for k in range(s, e):
                r = rows[k]
                g0 = stats[r, 0]
                g1 = stats[r, 1]
                c = count[r]
                for j in range(indptr[r], indptr[r + 1]):
                    f = feat[j]
                    if chosen[f] == stamp:
                        i = 3 * (bin_off[f] + bins[j])
                        hist[i] += g0
                        hist[i + 1] += g1
                        hist[i + 2] += c

    parent = _score(S0, S1, C, crit, lam)
    best_gain = -np.inf
    best_f = -1
    best_b = -1
    for t in range(m):
        f = touched[t]
        lo = bin_off[f]
        nbins = bin_off[f + 1] - lo
        # zero bin holds whatever the stored bins do not
        a0 = 0.0
        a1 = 0.0
        ac = 0.0
        first = -1
        last = -1
        for b in range(nbins):
            i = 3 * (lo + b)
            if hist[i + 2] > 0.0:
                a0 += hist[i]
                a1 += hist[i + 1]
                ac += hist[i + 2]
                if first < 0:
                    first = b
                last = b
        zb = zero_bin[f]
        if C - ac > 0.0:
            zi = 3 * (lo + zb)
            hist[zi] = S0 - a0
            hist[zi + 1] = S1 - a1
            hist[zi + 2] = C - ac
            if first < 0 or zb < first:
                first = zb
            if zb > last:
                last = zb
        if first < last:
            rb = -1
            if splitter == RANDOM:
                rb = first + np.random.randint(0, last - first)
            L0 = 0.0
            L1 = 0.0
            LC = 0.0
            for b in range(first, last):
                i = 3 * (lo + b)
                L0 += hist[i]
                L1 += hist[i + 1]
                LC += hist[i + 2]
                if splitter == RANDOM and b != rb:
                    continue
                R0 = S0 - L0
                R1 = S1 - L1
                RC = C - LC
                if LC < min_leaf or RC < min_leaf:
                    continue
                if crit == NEWTON and (L1 < min_child_weight or R1 < min_child_weight):
                    continue
                gain = _score(L0, L1, LC, crit, lam) + _score(R0, R1, RC, crit, lam) - parent
                # ties: lowest feature, then lowest threshold (bins ascend)
                if gain > best_gain or (gain == best_gain and f < best_f):
                    best_gain = gain
                    best_f = f
                    best_b = b
        for b in range(nbins):
            i = 3 * (lo + b)
            hist[i] = 0.0
            hist[i + 1] = 0.0
            hist[i + 2] = 0.0
    return best_f, best_b, best_gain


@njit(cache=True, nogil=True)
def _partition(rows, s, e, indptr, feat, bins, f, b, zb, buf):
    nl = 0
    nr = 0
    for k in range(s, e):
        r = rows[k]
        if _lookup(indptr, feat, bins, r, f, zb) <= b:
            rows[s + nl] = r
            nl += 1
        else:
            buf[nr] = r
            nr += 1
    for k in range(nr):
        rows[s + nl + k] = buf[k]
    return s + nl


# Nodes with at least this many rows keep a list of the features present in
# them (with counts), so a child's list costs a scan of the smaller sibling.
PRESENCE_MIN = 16


@njit(cache=True, nogil=True)
def _reserve(pool_f, pool_c, need):
    if need <= pool_f.shape[0]:
        return pool_f, pool_c
    size = max(2 * pool_f.shape[0], need)
    nf = np.empty(size, np.int32)
    nc = np.empty(size, np.int32)
    nf[:pool_f.shape[0]] = pool_f
    nc[:pool_c.shape[0]] = pool_c
    return nf, nc


@njit(cache=True, nogil=True)
def grow(indptr, feat, bins, bin_off, zero_bin, cptr, crow, cbin, rows, stats, count,
         crit, splitter, max_features, max_depth, max_leaves, min_leaf,
         min_child_weight, lam, feat_mask, seed, leaf_of):
    """Grow one tree on ``rows``; returns node arrays and fills ``leaf_of``.

    Unlimited leaves grow depth-first; with ``max_leaves > 0`` the open leaf
    with the largest gain is split next (ties to the lowest node id).
    """
    np.random.seed(seed)
    n_feat = zero_bin.shape[0]
    n = rows.shape[0]
    cap = 2 * n + 1
    nf = np.full(cap, -1, np.int32)
    nb = np.zeros(cap, np.int32)
    nl = np.full(cap, -1, np.int32)
    nr = np.full(cap, -1, np.int32)
    ns0 = np.zeros(cap)
    ns1 = np.zeros(cap)
    nsc = np.zeros(cap)
    nst = np.zeros(cap, np.int64)
    nen = np.zeros(cap, np.int64)
    ndep = np.zeros(cap, np.int32)
    spf = np.full(cap, -1, np.int32)
    spb = np.zeros(cap, np.int32)
    spg = np.full(cap, -np.inf)

    hist = np.zeros(3 * bin_off[-1])
    mark = np.full(n_feat, -1, np.int64)
    chosen = np.full(n_feat, -1, np.int64)
    touched = np.empty(n_feat, np.int32)
    buf = np.empty(n, rows.dtype)
    open_ = np.empty(cap, np.int64)

    # presence lists (only used when features are subsampled per node)
    use_lists = max_features > 0
    node_of = np.full(stats.shape[0], -1, np.int64)
    plo = np.zeros(cap, np.int64)
    pln = np.full(cap, -1, np.int64)
    pnz = np.full(cap, -1, np.int64)
    pool_f = np.empty(4 * n_feat + 16, np.int32)
    pool_c = np.empty(4 * n_feat + 16, np.int32)
    top = 0
    cnt = np.zeros(n_feat, np.int32)
    order = np.empty(n_feat, np.int32)

    S0 = 0.0
    S1 = 0.0
    C = 0.0
    for k in range(n):
        r = rows[k]
        S0 += stats[r, 0]
        S1 += stats[r, 1]
        C += count[r]
        node_of[r] = 0
    ns0[0] = S0
    ns1[0] = S1
    nsc[0] = C
    nst[0] = 0
    nen[0] = n
    n_nodes = 1
    n_open = 0
    n_leaves = 1
    stamp = 0

    if use_lists:
        no = 0
        tot = 0
        for k in range(n):
            r = rows[k]
            for j in range(indptr[r], indptr[r + 1]):
                f = feat[j]
                if feat_mask[f]:
                    if cnt[f] == 0:
                        order[no] = f
                        no += 1
                    cnt[f] += 1
                    tot += 1
        pool_f, pool_c = _reserve(pool_f, pool_c, no)
        for t in range(no):
            pool_f[t] = order[t]
            pool_c[t] = cnt[order[t]]
            cnt[order[t]] = 0
        plo[0] = 0
        pln[0] = no
        pnz[0] = tot
        top = no

    # node 0 is evaluated first; afterwards the two children of each split
    pending = np.empty(2, np.int64)
    pending[0] = 0
    n_pending = 1
    while True:
        for q in range(n_pending):
            child = pending[q]
            ok = nen[child] - nst[child] >= 2 and nsc[child] >= 2 * min_leaf
            if max_depth > 0 and ndep[child] >= max_depth:
                ok = False
            if crit != NEWTON and (ns0[child] <= 0.0 or ns1[child] <= 0.0):
                ok = False
            if not ok:
                continue
            lo = plo[child]
            cf, cb, cg = _find_split(nst[child], nen[child], rows, indptr, feat, bins, bin_off, zero_bin,
                                     stats, count, ns0[child], ns1[child], nsc[child], crit, splitter,
                                     max_features, min_leaf, min_child_weight, lam, feat_mask,
                                     hist, mark, chosen, touched, stamp,
                                     child, node_of, cptr, crow, cbin,
                                     pool_f[lo:lo + max(pln[child], 0)], pln[child], pnz[child])
            stamp += 1
            if cf >= 0 and (cg > 0.0 if crit == NEWTON else cg > -1e-9):
                spf[child] = cf
                spb[child] = cb
                spg[child] = cg
                open_[n_open] = child
                n_open += 1

        if n_open == 0:
            break
        if max_leaves > 0 and n_leaves >= max_leaves:
            break
        if max_leaves > 0:
            pick = 0
            for t in range(1, n_open):
                a = open_[t]
                p = open_[pick]
                if spg[a] > spg[p] or (spg[a] == spg[p] and a < p):
                    pick = t
            node = open_[pick]
            open_[pick] = open_[n_open - 1]
            n_open -= 1
        else:
            n_open -= 1
            node = open_[n_open]

        f = spf[node]
        b = spb[node]
        s = nst[node]
        e = nen[node]
        mid = _partition(rows, s, e, indptr, feat, bins, f, b, zero_bin[f], buf)
        nf[node] = f
        nb[node] = b
        left = n_nodes
        right = n_nodes + 1
        n_nodes += 2
        n_leaves += 1
        nl[node] = left
        nr[node] = right
        nst[left] = s
        nen[left] = mid
        nst[right] = mid
        nen[right] = e
        for child in (left, right):
            ndep[child] = ndep[node] + 1
            a0 = 0.0
            a1 = 0.0
            ac = 0.0
            for k in range(nst[child], nen[child]):
                r = rows[k]
                a0 += stats[r, 0]
                a1 += stats[r, 1]
                ac += count[r]
                node_of[r] = child
            ns0[child] = a0
            ns1[child] = a1
            nsc[child] = ac

        if use_lists and pln[node] >= 0:
            if mid - s <= e - mid:
                small, large = left, right
            else:
                small, large = right, left
            no = 0
            tot = 0
            for k in range(nst[small], nen[small]):
                r = rows[k]
                for j in range(indptr[r], indptr[r + 1]):
                    g = feat[j]
                    if feat_mask[g]:
                        if cnt[g] == 0:
                            order[no] = g
                            no += 1
                        cnt[g] += 1
                        tot += 1
            pool_f, pool_c = _reserve(pool_f, pool_c, top + no + pln[node])
            if nen[small] - nst[small] >= PRESENCE_MIN:
                plo[small] = top
                for t in range(no):
                    pool_f[top + t] = order[t]
                    pool_c[top + t] = cnt[order[t]]
                pln[small] = no
                pnz[small] = tot
                top += no
            if nen[large] - nst[large] >= PRESENCE_MIN:
                plo[large] = top
                m = 0
                tot = 0
                for t in range(plo[node], plo[node] + pln[node]):
                    g = pool_f[t]
                    c2 = pool_c[t] - cnt[g]
                    if c2 > 0:
                        pool_f[top + m] = g
                        pool_c[top + m] = c2
                        m += 1
                        tot += c2
                pln[large] = m
                pnz[large] = tot
                top += m
            for t in range(no):
                cnt[order[t]] = 0

        pending[0] = left
        pending[1] = right
        n_pending = 2

    value = np.zeros(n_nodes)
    for node in range(n_nodes):
        if crit == NEWTON:
            value[node] = -ns0[node] / (ns1[node] + lam)
        else:
            tot_w = ns0[node] + ns1[node]
            value[node] = ns1[node] / tot_w if tot_w > 0 else 0.5
        if nl[node] < 0:
            for k in range(nst[node], nen[node]):
                leaf_of[rows[k]] = node
    return nf[:n_nodes].copy(), nb[:n_nodes].copy(), nl[:n_nodes].copy(), nr[:n_nodes].copy(), value


@njit(cache=True, nogil=True)
def predict_sum(indptr, indices, data, feature, threshold, left, right, value, tree_off, out):
    """Add the leaf value of every tree to ``out`` for each CSR row."""
    n = indptr.shape[0] - 1
    n_trees = tree_off.shape[0] - 1
    for i in range(n):
        acc = 0.0
        for t in range(n_trees):
            base = tree_off[t]
            node = 0
            while left[base + node] >= 0:
                f = feature[base + node]
                v = _lookup(indptr, indices, data, i, f, 0.0)
                if v <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            acc += value[base + node]
        out[i] += acc
