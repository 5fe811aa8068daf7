import numpy as np

from .._accel import njit, use_numba


@njit(cache=True, nogil=True)
def _asof_nb(src_keys, src_ts, q_keys, q_ts, ttl):
    m = src_keys.shape[0]
    out = np.full(q_keys.shape[0], -1, dtype=np.int64)
    for i in range(q_keys.shape[0]):
        k = q_keys[i]
        t = q_ts[i]
        # first position whose (key, ts) is strictly greater than (k, t)
        lo = 0
        hi = m
        while lo < hi:
            mid = (lo + hi) // 2
            if src_keys[mid] < k or (src_keys[mid] == k and src_ts[mid] <= t):
                lo = mid + 1
            else:
                hi = mid
        j = lo - 1
        if j >= 0 and src_keys[j] == k and t - src_ts[j] <= ttl:
            out[i] = j
    return out


_KEY_SHIFT = np.int64(1) << np.int64(41)
_TS_OFFSET = np.int64(1) << np.int64(40)


def _asof_np(src_keys, src_ts, q_keys, q_ts, ttl):
    if len(src_ts) and (np.abs(src_ts).max() >= _TS_OFFSET or src_keys.max() >= (1 << 21)):
        raise OverflowError("keys or timestamps out of range for the composite search")
    if len(q_ts) and (np.abs(q_ts).max() >= _TS_OFFSET or q_keys.max() >= (1 << 21)):
        raise OverflowError("keys or timestamps out of range for the composite search")
    src = src_keys * _KEY_SHIFT + (src_ts + _TS_OFFSET)
    qry = q_keys * _KEY_SHIFT + (q_ts + _TS_OFFSET)
    j = np.searchsorted(src, qry, side="right") - 1
    jc = np.maximum(j, 0)
    ok = (j >= 0) & (src_keys[jc] == q_keys) & (q_ts - src_ts[jc] <= ttl)
    if len(src) == 0:
        ok[:] = False
    return np.where(ok, j, -1).astype(np.int64)


def asof_indices(src_keys, src_ts, q_keys, q_ts, ttl):
    """Backward as-of lookup with a time-to-live.

    ``src_keys``/``src_ts`` must be sorted lexicographically by (key, ts).
    For each query ``(key, t)`` returns the index of the last source row with
    the same key and ``ts <= t``, provided ``t - ts <= ttl``; otherwise -1.
    Among equal (key, ts) source rows the last one wins.
    """
    src_keys = np.ascontiguousarray(src_keys, dtype=np.int64)
    src_ts = np.ascontiguousarray(src_ts, dtype=np.int64)
    q_keys = np.ascontiguousarray(q_keys, dtype=np.int64)
    q_ts = np.ascontiguousarray(q_ts, dtype=np.int64)
    if use_numba():
        return _asof_nb(src_keys, src_ts, q_keys, q_ts, np.int64(ttl))
    return _asof_np(src_keys, src_ts, q_keys, q_ts, np.int64(ttl))
