import os
import subprocess
import sys

import numpy as np
import pytest

from energy_fs import _accel
from energy_fs.kernels import asof_indices, rolling_window_stats, solar_geometry
from energy_fs.kernels.trees import flatten, grow_tree, predict_forest, presort


def both(fn, *args):
    with _accel.backend("numba"):
        a = fn(*args)
    with _accel.backend("numpy"):
        b = fn(*args)
    return a, b


def test_set_backend_validates():
    with pytest.raises(ValueError):
        _accel.set_backend("cuda")


def test_env_flag_selects_numpy():
    code = "from energy_fs import _accel; print(_accel.use_numba())"
    env = dict(os.environ, ENERGY_FS_USE_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "False"


def test_rolling_backends_identical(rng):
    n = 5000
    groups = np.repeat(np.arange(5), n // 5)
    ts = np.tile(np.cumsum(rng.choice([3600, 3600, 7200], n // 5)), 5).astype(np.int64)
    x = rng.normal(size=n)
    x[rng.random(n) < 0.01] = np.nan
    a, b = both(rolling_window_stats, groups, ts, x, 10, 3600)
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


def test_solar_backends_close(rng):
    t = rng.uniform(0, 2e9, 2000)
    lat = rng.uniform(-90, 90, 2000)
    lon = rng.uniform(-180, 180, 2000)
    (alt1, az1), (alt2, az2) = both(solar_geometry, t, lat, lon)
    np.testing.assert_allclose(alt1, alt2, atol=1e-9)
    d = np.abs(az1 - az2)
    assert np.all(np.minimum(d, 360 - d) < 1e-7)


def test_asof_backends_identical(rng):
    src_keys = np.sort(rng.integers(0, 5, 400))
    src_ts = rng.integers(0, 10_000, 400)
    order = np.lexsort((src_ts, src_keys))
    src_keys, src_ts = src_keys[order], src_ts[order]
    q_keys = rng.integers(-1, 6, 1000)
    q_ts = rng.integers(-100, 10_100, 1000)
    a, b = both(asof_indices, src_keys, src_ts, q_keys, q_ts, 500)
    np.testing.assert_array_equal(a, b)


def test_tree_backends_identical(rng):
    X = rng.normal(size=(600, 5)).round(1)  # ties exercise threshold handling
    X[rng.random(X.shape) < 0.15] = np.nan
    r = rng.normal(size=600)
    bag = rng.random(600) < 0.9
    pre = presort(X)
    a, b = both(grow_tree, X, r, bag, pre, 4, 5, 1e-12)
    for key in a:
        np.testing.assert_array_equal(a[key], b[key], err_msg=key)
    flat = flatten([a, a])
    p1, p2 = both(predict_forest, X, 0.3, 0.5, flat)
    np.testing.assert_array_equal(p1, p2)


def test_kernel_benchmark_smoke():
    import importlib.util
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    frame = mod.run(rows=3000, repeats=1)
    assert frame["agree"].all()
    assert (frame[["numba_s", "numpy_s"]] > 0).all().all()
