"""Time every hot kernel under the numba and the pure-numpy backend.

    python3 benchmarks/bench_kernels.py [--rows 200000] [--repeats 5] [--out kernels.csv]

Each kernel runs once per backend to warm up (numba compiles on first call),
then ``--repeats`` times; the median wall time is reported together with
a check that both backends agree.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np
import pandas as pd

from energy_fs import _accel
from energy_fs.kernels import asof_indices, rolling_window_stats, solar_geometry
from energy_fs.kernels.trees import flatten, grow_tree, predict_forest, presort


def _cases(rows: int, rng):
    n_groups = 28
    per = rows // n_groups
    groups = np.repeat(np.arange(n_groups), per)
    ts = np.tile(np.arange(per, dtype=np.int64) * 3600, n_groups)
    x = rng.gamma(2.0, 0.5, groups.size)

    t = 1.5e9 + rng.uniform(0, 3.15e7, rows)
    lat = rng.uniform(-60, 60, rows)
    lon = rng.uniform(-180, 180, rows)

    src_keys = np.repeat(np.arange(3), rows // 3)
    src_ts = np.tile(np.arange(rows // 3, dtype=np.int64) * 3600, 3)
    q_keys = rng.integers(0, 3, rows)
    q_ts = rng.integers(0, (rows // 3) * 3600, rows)

    n_fit = min(rows, 60_000)
    X = rng.normal(size=(n_fit, 20)).round(2)
    r = rng.normal(size=n_fit)
    bag = np.ones(n_fit, dtype=bool)
    pre = presort(X)
    tree = grow_tree(X, r, bag, pre, 6, 20, 1e-12)
    flat = flatten([tree] * 50)

    return {
        "rolling_window_stats": (rolling_window_stats, (groups, ts, x, 10, 3600)),
        "solar_geometry": (solar_geometry, (t, lat, lon)),
        "asof_indices": (asof_indices, (src_keys, src_ts, q_keys, q_ts, 3600)),
        "grow_tree (depth 6)": (grow_tree, (X, r, bag, pre, 6, 20, 1e-12)),
        "predict_forest (50 trees)": (predict_forest, (X, 0.0, 0.1, flat)),
    }


def _agree(a, b) -> bool:
    if isinstance(a, dict):
        return all(np.allclose(a[k], b[k], equal_nan=True) for k in a)
    if isinstance(a, tuple):
        return all(_agree(u, v) for u, v in zip(a, b))
    return bool(np.allclose(a, b, equal_nan=True, atol=1e-7))


def run(rows: int, repeats: int, seed: int = 0) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    records = []
    for name, (fn, args) in _cases(rows, rng).items():
        times, outputs = {}, {}
        for backend in _accel.BACKENDS:
            with _accel.backend(backend):
                outputs[backend] = fn(*args)  # warm-up / compile
                samples = []
                for _ in range(repeats):
                    start = time.perf_counter()
                    fn(*args)
                    samples.append(time.perf_counter() - start)
            times[backend] = statistics.median(samples)
        records.append({"kernel": name, "numba_s": times["numba"], "numpy_s": times["numpy"],
                        "speedup": times["numpy"] / times["numba"],
                        "agree": _agree(outputs["numba"], outputs["numpy"])})
    return pd.DataFrame(records)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=200_000)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="optional CSV path")
    args = parser.parse_args(argv)
    frame = run(args.rows, args.repeats, args.seed)
    print(frame.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    if args.out:
        frame.to_csv(args.out, index=False)


if __name__ == "__main__":
    main()
