import numpy as np

from .._accel import njit, use_numba


@njit(cache=True, nogil=True)
def _rolling_nb(groups, timestamps, values, window, max_gap):
    n = values.shape[0]
    mean = np.full(n, np.nan)
    std = np.full(n, np.nan)
    complete = np.zeros(n, dtype=np.bool_)
    run_start = 0
    for i in range(n):
        if (i == 0 or groups[i] != groups[i - 1]
                or timestamps[i] - timestamps[i - 1] > max_gap
                or np.isnan(values[i])):
            run_start = i
        if np.isnan(values[i]):
            run_start = i + 1
            continue
        if i - run_start + 1 < window:
            continue
        lo = i - window + 1
        s = values[lo]
        for k in range(lo + 1, i + 1):
            s += values[k]
        m = s / window
        d = values[lo] - m
        ss = d * d
        for k in range(lo + 1, i + 1):
            d = values[k] - m
            ss += d * d
        mean[i] = m
        std[i] = np.sqrt(ss / window)
        complete[i] = True
    return mean, std, complete


def _rolling_np(groups, timestamps, values, window, max_gap):
    n = values.shape[0]
    mean = np.full(n, np.nan)
    std = np.full(n, np.nan)
    complete = np.zeros(n, dtype=bool)
    if n < window:
        return mean, std, complete
    idx = np.arange(n)
    nan = np.isnan(values)
    brk = np.zeros(n, dtype=bool)
    brk[0] = True
    brk[1:] = (groups[1:] != groups[:-1]) | (np.diff(timestamps) > max_gap)
    # a NaN restarts the run just after itself
    starts = np.where(brk, idx, 0)
    starts = np.where(nan, idx + 1, starts)
    starts = np.maximum.accumulate(starts)
    ok = (~nan) & (idx - starts + 1 >= window)
    win = np.lib.stride_tricks.sliding_window_view(values, window)  # row j ends at j+window-1
    s = win[:, 0].copy()
    for k in range(1, window):
        s += win[:, k]
    m = s / window
    d = win[:, 0] - m
    ss = d * d
    for k in range(1, window):
        d = win[:, k] - m
        ss += d * d
    tail = slice(window - 1, None)
    sel = ok[tail]
    mean[tail] = np.where(sel, m, np.nan)
    std[tail] = np.where(sel, np.sqrt(ss / window), np.nan)
    complete[tail] = sel
    return mean, std, complete


def rolling_window_stats(groups, timestamps, values, window=10, max_gap=3600):
    """Trailing-inclusive rolling mean/std (population) over ``window`` rows.

    Input must be sorted by (group, timestamp). A row is complete only when
    its ``window`` trailing rows share its group, contain no NaN and have no
    step longer than ``max_gap`` seconds; incomplete rows get NaN.
    Returns ``(mean, std, complete)``.
    """
    groups = np.ascontiguousarray(groups, dtype=np.int64)
    timestamps = np.ascontiguousarray(timestamps, dtype=np.int64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be positive")
    if use_numba():
        return _rolling_nb(groups, timestamps, values, int(window), int(max_gap))
    return _rolling_np(groups, timestamps, values, int(window), int(max_gap))
