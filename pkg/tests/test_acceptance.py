"""Acceptance checks, one verdict line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
repeated in the terminal summary. Criteria 5 and 6 need the real household
corpus: point ``ENERGY_FS_REAL_DATA`` at a raw directory laid out like the
``ingest --raw`` input (``consumption*.csv``, ``weather.csv``,
``metadata.csv``). Without it they are skipped.
"""
import os
import time
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from conftest import build_store
from energy_fs.cli import main as cli_main
from energy_fs.evaluation import CvPlan, ablation, metrics
from energy_fs.features import rolling_stats, solar_position
from energy_fs.gbrt import GbrtParams, fit
from energy_fs.pipelines import (ALL_FEATURES, BenchConfig, SubsetQuery, run_benchmark,
                                 run_eager, run_lazy, run_partitioned)
from energy_fs.registry import Registry, default_registry_text, point_in_time_join
from helpers import (SPA_AZIMUTH, SPA_T, SPA_ZENITH, naive_rolling, oracle_join,
                     random_instance, record)

SEED = 7
# ablation settings for the synthetic trend check; see the README for why
# the plan is lighter than the 10 x 10 default
TREND_PARAMS = GbrtParams(n_rounds=100, seed=SEED)
TREND_PLAN = CvPlan(k=10, repeats=1, seed=SEED)
REAL_DATA = os.environ.get("ENERGY_FS_REAL_DATA")


@pytest.fixture(scope="module")
def year_store(tmp_path_factory):
    """28 households x 365 days."""
    return build_store(tmp_path_factory.mktemp("year"), 28, 365, seed=SEED)


def test_criterion_1_join_oracle(tmp_path):
    rng = np.random.default_rng(SEED)
    start = time.perf_counter()
    bad = 0
    for i in range(200):
        reg, query, sources = random_instance(rng, tmp_path / f"i{i}")
        got = point_in_time_join(reg, query)
        expect = oracle_join(reg, query, sources)
        if not (np.array_equal(got.mask, np.isnan(expect))
                and np.array_equal(got.data, expect, equal_nan=True)):
            bad += 1
    elapsed = time.perf_counter() - start
    ok = bad == 0 and elapsed < 60
    record(1, ok, f"{200 - bad}/200 instances match the brute-force oracle in {elapsed:.1f} s "
                  "(limit 60 s)")
    assert ok


@pytest.mark.slow
def test_criterion_2_strategy_equivalence(year_store):
    ids = tuple(f"house{i}" for i in range(1, 29))
    query = SubsetQuery(ids, 0, 2**40, ALL_FEATURES)
    eager, _ = run_eager(year_store, query)
    part, _ = run_partitioned(year_store, query, threads=4)
    lazy, _ = run_lazy(year_store, year_store / "registry.txt", query)
    e = eager.sorted()
    same_p, same_l = e.equals(part.sorted()), e.equals(lazy.sorted())
    ok = same_p and same_l and len(e) > 28 * 365 * 23
    record(2, ok, f"{len(e)} rows x {len(e.columns)} features; eager == partitioned: {same_p}, "
                  f"eager == lazy: {same_l}")
    assert ok


@pytest.fixture(scope="module")
def bench_medians(year_store, tmp_path_factory):
    t0 = int(pd.Timestamp("2018-01-02T08:00:00Z").timestamp())
    query = SubsetQuery(("house1", "house2", "house3"), t0, t0 + 30 * 86400, ALL_FEATURES)
    report = run_benchmark(BenchConfig(year_store, year_store / "registry.txt", query,
                                       repetitions=5, threads=4,
                                       work_dir=tmp_path_factory.mktemp("bench")))
    print(report.render(), end="")
    return report.medians()


@pytest.mark.slow
def test_criterion_3_timing_shape(bench_medians):
    e, p, l = bench_medians["eager"], bench_medians["partitioned"], bench_medians["lazy"]
    lazy_prep = l.t_join_enrich < 0.05 * e.t_join_enrich
    parallel = p.t_join_enrich < e.t_join_enrich
    retrieval = e.t_obtain_subset < l.t_obtain_subset
    ok = lazy_prep and parallel and retrieval
    note = "" if parallel else f" (parallel clause needs >1 CPU; this host has {os.cpu_count()})"
    record(3, ok, f"join&enrich lazy {l.t_join_enrich:.4f} s vs 0.05 x eager "
                  f"{0.05 * e.t_join_enrich:.4f} s: {lazy_prep}; partitioned "
                  f"{p.t_join_enrich:.3f} s < eager {e.t_join_enrich:.3f} s: {parallel}; "
                  f"subset eager {e.t_obtain_subset:.3f} s < lazy {l.t_obtain_subset:.3f} s: "
                  f"{retrieval}{note}")
    assert lazy_prep and retrieval


@pytest.mark.slow
@pytest.mark.xfail((os.cpu_count() or 1) < 2, strict=False,
                   reason="a thread pool cannot beat one process on a single CPU")
def test_criterion_3_partitioned_beats_eager(bench_medians):
    assert bench_medians["partitioned"].t_join_enrich < bench_medians["eager"].t_join_enrich


def _trend(rows):
    steps = [(a.feature_set_label, b.feature_set_label, b.mse / a.mse - 1)
             for a, b in zip(rows, rows[1:])]
    monotone = all(rel <= 0.02 for _, _, rel in steps)
    gain = 1 - rows[-1].mae / rows[0].mae
    return monotone, gain, steps


@pytest.mark.slow
def test_criterion_4_ablation_trend(tmp_path):
    start = time.perf_counter()
    store = build_store(tmp_path, 28, 90, seed=SEED)
    registry = Registry.from_text(default_registry_text(), store)
    rows = ablation(registry, TREND_PARAMS, TREND_PLAN)
    elapsed = time.perf_counter() - start
    monotone, gain, steps = _trend(rows)
    for r in rows:
        print(f"  {r.feature_set_label:<14} n={r.n_features:>2} mse={r.mse:.5f} mae={r.mae:.5f}")
    worst = max(rel for _, _, rel in steps)
    ok = monotone and gain >= 0.05 and elapsed < 600
    record(4, ok, f"largest step MSE change {worst:+.2%} (limit +2%); raw -> full MAE "
                  f"improvement {gain:.1%} (min 5%); {elapsed:.0f} s (limit 600 s)")
    assert ok


@pytest.fixture(scope="module")
def real_registry(tmp_path_factory):
    if not REAL_DATA:
        return None
    raw = Path(REAL_DATA)
    store = tmp_path_factory.mktemp("real") / "store"
    assert cli_main(["ingest", "--raw", str(raw), "--out", str(store)]) == 0
    return Registry.from_text(default_registry_text(), store)


def test_criterion_5_real_ablation_values(real_registry):
    if real_registry is None:
        record(5, None, "real household corpus not available (set ENERGY_FS_REAL_DATA)")
        pytest.skip("real data not available")
    rows = ablation(real_registry, GbrtParams(seed=SEED), CvPlan(k=10, repeats=1, seed=SEED))
    raw_mae, full_mae = rows[0].mae, rows[-1].mae
    ok = (abs(raw_mae / 0.317 - 1) <= 0.15 and abs(full_mae / 0.274 - 1) <= 0.15
          and full_mae <= 0.95 * raw_mae)
    record(5, ok, f"raw MAE {raw_mae:.3f} kWh (0.317 +/- 15%), full MAE {full_mae:.3f} kWh "
                  f"(0.274 +/- 15%), improvement {1 - full_mae / raw_mae:.1%}")
    assert ok


def test_criterion_6_real_importance_ranks(real_registry):
    if real_registry is None:
        record(6, None, "real household corpus not available (set ENERGY_FS_REAL_DATA)")
        pytest.skip("real data not available")
    from energy_fs.evaluation import importance_report
    scores = importance_report(real_registry, GbrtParams(seed=SEED), "split_count")
    top = [n for n, _ in scores[:2]]
    ok = top == ["energy", "energy_mean"]
    record(6, ok, f"split-count top two: {top}")
    assert ok


def test_criterion_7_solar_accuracy():
    pos = solar_position(39.742476, -105.1786, SPA_T)
    dz = abs((90.0 - pos.altitude) - SPA_ZENITH)
    da = abs(pos.azimuth - SPA_AZIMUTH)
    t_eq = int(pd.Timestamp("2019-03-20T12:07:00Z").timestamp())
    alt_eq = solar_position(0.0, 0.0, t_eq).altitude
    ok = dz <= 0.5 and da <= 0.5 and abs(alt_eq - 90.0) <= 1.5
    record(7, ok, f"reference zenith error {dz:.4f} deg, azimuth error {da:.4f} deg (limit 0.5); "
                  f"equinox noon altitude at the equator {alt_eq:.3f} deg (90 +/- 1.5)")
    assert ok


def test_criterion_8_numeric_oracles():
    rng = np.random.default_rng(SEED)
    worst_roll = worst_metric = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 80))
        ts = np.cumsum(rng.choice([3600, 3600, 3600, 7200], n)).astype(np.int64)
        x = rng.normal(1.0, 0.5, n)
        x[rng.random(n) < 0.03] = np.nan
        got = rolling_stats(ts, x)
        mean, std = naive_rolling(ts, x)
        if not (np.array_equal(np.isnan(got.mean), np.isnan(mean))
                and np.array_equal(np.isnan(got.std), np.isnan(std))):
            worst_roll = np.inf
            continue
        fin = ~np.isnan(mean)
        for a, b in ((got.mean[fin], mean[fin]), (got.std[fin], std[fin])):
            if a.size:
                worst_roll = max(worst_roll, float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))))

        m = int(rng.integers(1, 200))
        a, b = rng.normal(size=m), rng.normal(size=m)
        d = sorted(abs(u - v) for u, v in zip(a, b))
        med = d[m // 2] if m % 2 else (d[m // 2 - 1] + d[m // 2]) / 2
        ref = (sum((u - v) ** 2 for u, v in zip(a, b)) / m, sum(d) / m, med)
        for g, r in zip(metrics(a, b), ref):
            worst_metric = max(worst_metric, abs(g - r) / abs(r))
    ok = worst_roll <= 1e-9 and worst_metric <= 1e-12
    record(8, ok, f"1000 cases each; worst relative error rolling {worst_roll:.2e} (limit 1e-9), "
                  f"metrics {worst_metric:.2e} (limit 1e-12)")
    assert ok


def _pipeline(root: Path):
    root.mkdir(parents=True)
    cfg = root / "run.cfg"
    cfg.write_text("seed=7\nk=3\nrepeats=1\nrounds=20\nmin_leaf=10\n")
    steps = [
        ["synth", "--households", "4", "--days", "14", "--seed", "7", "--out", str(root / "raw")],
        ["ingest", "--raw", str(root / "raw"), "--out", str(root / "store")],
        ["register", "--store", str(root / "store")],
        ["ablate", "--store", str(root / "store"), "--config", str(cfg),
         "--out", str(root / "ablation.csv")],
        ["train", "--store", str(root / "store"), "--config", str(cfg),
         "--out", str(root / "model.txt")],
    ]
    for argv in steps:
        assert cli_main(argv) == 0, argv
    return (root / "ablation.csv").read_bytes(), (root / "model.txt").read_bytes()


def test_criterion_9_determinism(tmp_path):
    a = _pipeline(tmp_path / "run1")
    b = _pipeline(tmp_path / "run2")
    ok = a[0] == b[0] and a[1] == b[1]
    record(9, ok, f"ablation CSV identical: {a[0] == b[0]} ({len(a[0])} bytes); model file "
                  f"identical: {a[1] == b[1]} ({len(a[1])} bytes)")
    assert ok


def test_criterion_10_gbrt_sanity():
    rng = np.random.default_rng(SEED)
    violations = 0
    for _ in range(20):
        n, m = int(rng.integers(50, 400)), int(rng.integers(1, 8))
        X = rng.normal(size=(n, m))
        X[rng.random(X.shape) < 0.05] = np.nan
        y = np.nan_to_num(X[:, 0]) ** 2 + rng.normal(size=n)
        model = fit(X, y, GbrtParams(n_rounds=30, max_depth=3, min_samples_leaf=5))
        mse = np.asarray(model.train_mse)
        violations += int(np.any(np.diff(mse) > 1e-12 * mse[0]))
    stump = fit(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]),
                GbrtParams(n_rounds=1, max_depth=1, learning_rate=1.0, min_samples_leaf=1))
    pred = stump.predict(np.array([[0.0], [1.0]])).tolist()
    ok = violations == 0 and pred == [0.0, 1.0]
    record(10, ok, f"training MSE nonincreasing on {20 - violations}/20 datasets; stump predicts "
                   f"{pred}")
    assert ok
