"""Regression-tree kernels for squared-error boosting.

Trees grow level by level with exact greedy splits: each feature column is
argsorted once per fit, and one pass over that order per level scores every
threshold of every open node at once. A split sends ``x <= threshold`` left;
missing values follow the side that holds more non-missing training rows
(left on ties). Split candidates are compared with a strict ``>`` while
walking features and thresholds in ascending order, so ties resolve to the
lowest feature index, then the lowest threshold.

Node arrays (one row per node): feature (-1 for leaves), threshold, left,
right, default_left, value, gain, count. Child indices are tree-local.
"""
import numpy as np

from .._accel import njit, use_numba


def presort(X):
    """Per-feature stable argsort of non-missing rows, plus missing-row lists.

    Returns ``(sorted_idx, sorted_val, sorted_ptr, miss_idx, miss_ptr)`` in
    CSR layout; ``sorted_val`` caches the column values in scan order.
    """
    n, m = X.shape
    sorted_parts, miss_parts = [], []
    sorted_ptr = np.zeros(m + 1, dtype=np.int64)
    miss_ptr = np.zeros(m + 1, dtype=np.int64)
    for f in range(m):
        col = X[:, f]
        nan = np.isnan(col)
        rows = np.flatnonzero(~nan)
        order = rows[np.argsort(col[rows], kind="stable")]
        sorted_parts.append(order)
        miss_parts.append(np.flatnonzero(nan))
        sorted_ptr[f + 1] = sorted_ptr[f] + len(order)
        miss_ptr[f + 1] = miss_ptr[f] + miss_parts[-1].size
    cat = lambda parts: np.concatenate(parts).astype(np.int64) if parts else np.zeros(0, np.int64)
    sorted_idx = cat(sorted_parts)
    cols = np.repeat(np.arange(m), np.diff(sorted_ptr))
    sorted_val = np.ascontiguousarray(X[sorted_idx, cols], dtype=np.float64)
    return sorted_idx, sorted_val, sorted_ptr, cat(miss_parts), miss_ptr


def _candidate(GL, NL, GR, NR, Gm, Nm, G, N, min_leaf):
    """Gain and default direction of one threshold; gain is -1 when infeasible."""
    default_left = NL >= NR
    if default_left:
        gl, nl, gr, nr = GL + Gm, NL + Nm, GR, NR
    else:
        gl, nl, gr, nr = GL, NL, GR + Gm, NR + Nm
    if nl < min_leaf or nr < min_leaf:
        return -1.0, default_left
    return (gl * gl * nr + gr * gr * nl) / (nl * nr) - G * G / N, default_left


_candidate_nb = njit(cache=True, nogil=True)(_candidate)


@njit(cache=True, nogil=True)
def _best_splits_nb(r, slot, n_slots, G, N, sorted_idx, sorted_val, sorted_ptr,
                    miss_idx, miss_ptr, min_leaf, min_gain):
    m = sorted_ptr.shape[0] - 1
    best_gain = np.full(n_slots, min_gain)
    best_feat = np.full(n_slots, -1, dtype=np.int64)
    best_thr = np.zeros(n_slots)
    best_left = np.zeros(n_slots, dtype=np.bool_)
    Gm = np.zeros(n_slots)
    Nm = np.zeros(n_slots)
    GL = np.zeros(n_slots)
    NL = np.zeros(n_slots)
    last = np.zeros(n_slots)
    for f in range(m):
        Gm[:] = 0.0
        Nm[:] = 0.0
        GL[:] = 0.0
        NL[:] = 0.0
        for k in range(miss_ptr[f], miss_ptr[f + 1]):
            i = miss_idx[k]
            s = slot[i]
            if s < 0:
                continue
            Gm[s] += r[i]
            Nm[s] += 1.0
        for k in range(sorted_ptr[f], sorted_ptr[f + 1]):
            i = sorted_idx[k]
            s = slot[i]
            if s < 0:
                continue
            v = sorted_val[k]
            if NL[s] > 0.0 and v > last[s]:
                Gnm = G[s] - Gm[s]
                Nnm = N[s] - Nm[s]
                gain, dl = _candidate_nb(GL[s], NL[s], Gnm - GL[s], Nnm - NL[s], Gm[s], Nm[s],
                                         G[s], N[s], min_leaf)
                if gain > best_gain[s]:
                    best_gain[s] = gain
                    best_feat[s] = f
                    best_thr[s] = last[s]
                    best_left[s] = dl
            GL[s] += r[i]
            NL[s] += 1.0
            last[s] = v
    return best_gain, best_feat, best_thr, best_left


def _best_splits_np(r, slot, n_slots, G, N, sorted_idx, sorted_val, sorted_ptr,
                    miss_idx, miss_ptr, min_leaf, min_gain):
    m = sorted_ptr.shape[0] - 1
    best_gain = np.full(n_slots, min_gain)
    best_feat = np.full(n_slots, -1, dtype=np.int64)
    best_thr = np.zeros(n_slots)
    best_left = np.zeros(n_slots, dtype=bool)
    for f in range(m):
        miss = miss_idx[miss_ptr[f]:miss_ptr[f + 1]]
        ms = slot[miss]
        keep = ms >= 0
        Gm = np.bincount(ms[keep], weights=r[miss[keep]], minlength=n_slots)
        Nm = np.bincount(ms[keep], minlength=n_slots).astype(np.float64)
        rows = sorted_idx[sorted_ptr[f]:sorted_ptr[f + 1]]
        vals = sorted_val[sorted_ptr[f]:sorted_ptr[f + 1]]
        rs = slot[rows]
        keep = rs >= 0
        rows, rs, vals = rows[keep], rs[keep], vals[keep]
        order = np.argsort(rs, kind="stable")
        rows, rs, vals = rows[order], rs[order], vals[order]
        bounds = np.searchsorted(rs, np.arange(n_slots + 1))
        for s in range(n_slots):
            seg = rows[bounds[s]:bounds[s + 1]]
            if seg.size < 2:
                continue
            v = vals[bounds[s]:bounds[s + 1]]
            GLi = np.cumsum(r[seg])[:-1]  # left sums ending at each position
            NLi = np.arange(1, seg.size, dtype=np.float64)
            cut = v[1:] > v[:-1]
            if not cut.any():
                continue
            GLi, NLi, thr = GLi[cut], NLi[cut], v[:-1][cut]
            Gnm, Nnm = G[s] - Gm[s], N[s] - Nm[s]
            GR, NR = Gnm - GLi, Nnm - NLi
            dl = NLi >= NR
            gl = np.where(dl, GLi + Gm[s], GLi)
            nl = np.where(dl, NLi + Nm[s], NLi)
            gr = np.where(dl, GR, GR + Gm[s])
            nr = np.where(dl, NR, NR + Nm[s])
            ok = (nl >= min_leaf) & (nr >= min_leaf)
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = np.where(ok, (gl * gl * nr + gr * gr * nl) / (nl * nr) - G[s] * G[s] / N[s],
                                -1.0)
            j = int(np.argmax(gain))
            if gain[j] > best_gain[s]:
                best_gain[s] = gain[j]
                best_feat[s] = f
                best_thr[s] = thr[j]
                best_left[s] = dl[j]
    return best_gain, best_feat, best_thr, best_left


@njit(cache=True, nogil=True)
def _node_sums_nb(r, node_of, n_nodes):
    G = np.zeros(n_nodes)
    N = np.zeros(n_nodes)
    for i in range(r.shape[0]):
        nd = node_of[i]
        if nd >= 0:
            G[nd] += r[i]
            N[nd] += 1.0
    return G, N


def _node_sums_np(r, node_of, n_nodes):
    keep = node_of >= 0
    G = np.bincount(node_of[keep], weights=r[keep], minlength=n_nodes)
    N = np.bincount(node_of[keep], minlength=n_nodes).astype(np.float64)
    return G, N


@njit(cache=True, nogil=True)
def _route_nb(X, node_of, feature, threshold, left, right, default_left):
    for i in range(node_of.shape[0]):
        nd = node_of[i]
        if nd < 0 or feature[nd] < 0:
            continue
        v = X[i, feature[nd]]
        if np.isnan(v):
            go_left = default_left[nd]
        else:
            go_left = v <= threshold[nd]
        node_of[i] = left[nd] if go_left else right[nd]


def _route_np(X, node_of, feature, threshold, left, right, default_left):
    rows = np.flatnonzero(node_of >= 0)
    nd = node_of[rows]
    split = feature[nd] >= 0
    rows, nd = rows[split], nd[split]
    v = X[rows, feature[nd]]
    go_left = np.where(np.isnan(v), default_left[nd], v <= threshold[nd])
    node_of[rows] = np.where(go_left, left[nd], right[nd])


def grow_tree(X, r, in_bag, presorted, max_depth, min_samples_leaf, min_gain):
    """Fit one regression tree to residuals ``r`` over rows where ``in_bag``."""
    numba = use_numba()
    best_splits = _best_splits_nb if numba else _best_splits_np
    node_sums = _node_sums_nb if numba else _node_sums_np
    route = _route_nb if numba else _route_np
    sorted_idx, sorted_val, sorted_ptr, miss_idx, miss_ptr = presorted
    cap = 2 ** (max_depth + 1) - 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    default_left = np.ones(cap, dtype=np.bool_)
    gain = np.zeros(cap)
    node_of = np.where(in_bag, 0, -1).astype(np.int64)
    n_nodes = 1
    active = [0]
    G, N = node_sums(r, node_of, n_nodes)
    sums_G = {0: G[0]}
    sums_N = {0: N[0]}
    min_leaf = float(min_samples_leaf)
    for _ in range(max_depth):
        if not active:
            break
        slot_of = np.full(n_nodes + 1, -1, dtype=np.int64)  # last entry serves node -1
        slot_of[active] = np.arange(len(active))
        slot = slot_of[node_of]
        Ga = np.array([sums_G[a] for a in active])
        Na = np.array([sums_N[a] for a in active])
        bg, bf, bt, bl = best_splits(r, slot, len(active), Ga, Na, sorted_idx, sorted_val,
                                     sorted_ptr, miss_idx, miss_ptr, min_leaf, float(min_gain))
        next_active = []
        for s, nd in enumerate(active):
            if bf[s] < 0:
                continue
            feature[nd] = bf[s]
            threshold[nd] = bt[s]
            default_left[nd] = bl[s]
            gain[nd] = bg[s]
            left[nd], right[nd] = n_nodes, n_nodes + 1
            next_active += [n_nodes, n_nodes + 1]
            n_nodes += 2
        if not next_active:
            break
        route(X, node_of, feature, threshold, left, right, default_left)
        G, N = node_sums(r, node_of, n_nodes)
        for nd in next_active:
            sums_G[nd] = G[nd]
            sums_N[nd] = N[nd]
        active = next_active
    count = np.zeros(n_nodes)
    value = np.zeros(n_nodes)
    for nd in range(n_nodes):
        count[nd] = sums_N[nd]
        if feature[nd] < 0 and sums_N[nd] > 0:
            value[nd] = sums_G[nd] / sums_N[nd]
    return {
        "feature": feature[:n_nodes], "threshold": threshold[:n_nodes],
        "left": left[:n_nodes], "right": right[:n_nodes],
        "default_left": default_left[:n_nodes], "value": value,
        "gain": gain[:n_nodes], "count": count.astype(np.int64),
    }


@njit(cache=True, nogil=True)
def _predict_nb(X, base, lr, feature, threshold, left, right, default_left, value, tree_ptr):
    n = X.shape[0]
    out = np.empty(n)
    n_trees = tree_ptr.shape[0] - 1
    for i in range(n):
        acc = base
        for t in range(n_trees):
            off = tree_ptr[t]
            nd = 0
            while feature[off + nd] >= 0:
                f = feature[off + nd]
                v = X[i, f]
                if np.isnan(v):
                    go_left = default_left[off + nd]
                else:
                    go_left = v <= threshold[off + nd]
                nd = left[off + nd] if go_left else right[off + nd]
            acc += lr * value[off + nd]
        out[i] = acc
    return out


def _predict_np(X, base, lr, feature, threshold, left, right, default_left, value, tree_ptr):
    n = X.shape[0]
    out = np.full(n, base, dtype=np.float64)
    rows = np.arange(n)
    for t in range(tree_ptr.shape[0] - 1):
        off = tree_ptr[t]
        nd = np.zeros(n, dtype=np.int64)
        while True:
            f = feature[off + nd]
            internal = f >= 0
            if not internal.any():
                break
            v = X[rows, np.maximum(f, 0)]
            go_left = np.where(np.isnan(v), default_left[off + nd], v <= threshold[off + nd])
            nd = np.where(internal, np.where(go_left, left[off + nd], right[off + nd]), nd)
        out += lr * value[off + nd]
    return out


def predict_forest(X, base, lr, flat):
    """Sum of ``base + lr * leaf`` over trees, accumulated tree by tree."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    args = (X, float(base), float(lr), flat["feature"], flat["threshold"], flat["left"],
            flat["right"], flat["default_left"], flat["value"], flat["tree_ptr"])
    if use_numba():
        return _predict_nb(*args)
    return _predict_np(*args)


def flatten(trees):
    """Concatenate per-tree node arrays; child indices stay tree-local."""
    ptr = np.zeros(len(trees) + 1, dtype=np.int64)
    for t, tree in enumerate(trees):
        ptr[t + 1] = ptr[t] + len(tree["feature"])
    keys = ("feature", "threshold", "left", "right", "default_left", "value")
    dtypes = (np.int64, np.float64, np.int64, np.int64, np.bool_, np.float64)
    flat = {k: (np.concatenate([tr[k] for tr in trees]).astype(dt) if trees else np.zeros(0, dt))
            for k, dt in zip(keys, dtypes)}
    flat["tree_ptr"] = ptr
    return flat
