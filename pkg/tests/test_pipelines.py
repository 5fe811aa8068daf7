import pandas as pd
import pytest

from energy_fs.errors import StoreMissing
from energy_fs.pipelines import (ALL_FEATURES, STRATEGIES, BenchConfig, SubsetQuery, file_digest,
                                 run_benchmark, run_eager, run_lazy, run_partitioned, write_report)
from energy_fs.registry import get_subset


@pytest.fixture(scope="module")
def query(small_store):
    cons = pd.read_parquet(small_store / "consumption.parquet")
    t0 = int(cons["timestamp"].min()) + 86400
    return SubsetQuery(("house2", "house1"), t0, t0 + 5 * 86400, ALL_FEATURES)


def test_all_features_cover_catalog():
    from energy_fs.core import CATALOG
    assert set(ALL_FEATURES) == set(CATALOG.names)


def test_strategies_agree(small_store, query):
    eager, t_e = run_eager(small_store, query)
    part, t_p = run_partitioned(small_store, query, threads=4)
    lazy, t_l = run_lazy(small_store, small_store / "registry.txt", query)
    assert len(eager) == 2 * (5 * 24 + 1)
    assert eager.sorted().equals(part.sorted())
    assert eager.sorted().equals(lazy.sorted())
    assert t_p.threads == 4 and t_e.threads == 1 and t_l.threads == 1
    assert eager.columns == tuple(ALL_FEATURES)


def test_full_store_matches_lazy(small_store, small_registry):
    """Every household over the whole range, not only a window."""
    ids = [f"house{i}" for i in range(1, 5)]
    q = SubsetQuery(tuple(ids), 0, 2**40, ALL_FEATURES)
    eager, _ = run_eager(small_store, q)
    lazy = get_subset(small_registry, ids, 0, 2**40, ALL_FEATURES)
    assert eager.sorted().equals(lazy.sorted())


def test_partitioned_rejects_one_thread(small_store, query):
    with pytest.raises(ValueError):
        run_partitioned(small_store, query, threads=1)


def test_empty_subset(small_store):
    q = SubsetQuery(("house1",), 0, 10, ALL_FEATURES)
    m, t = run_eager(small_store, q)
    assert len(m) == 0 and t.t_obtain_subset >= 0
    m, _ = run_partitioned(small_store, q, threads=2)
    assert len(m) == 0


def test_intermediate_deterministic(small_store, query, tmp_path):
    run_eager(small_store, query, tmp_path / "a")
    run_eager(small_store, query, tmp_path / "b")
    a = file_digest(tmp_path / "a" / "eager" / "intermediate.parquet")
    b = file_digest(tmp_path / "b" / "eager" / "intermediate.parquet")
    assert a == b


def test_missing_store(tmp_path, query):
    with pytest.raises(StoreMissing):
        run_eager(tmp_path / "nope", query)
    with pytest.raises(StoreMissing):
        run_partitioned(tmp_path / "nope", query, threads=2)
    with pytest.raises(StoreMissing):
        run_lazy(tmp_path / "nope", tmp_path / "reg.txt", query)


def test_benchmark_report(small_store, query, tmp_path):
    report = run_benchmark(BenchConfig(small_store, small_store / "registry.txt", query,
                                       repetitions=3, threads=2, work_dir=tmp_path))
    assert len(report.runs) == 9
    assert set(report.medians()) == set(STRATEGIES)
    out = write_report(report, tmp_path / "bench.csv")
    frame = pd.read_csv(out, comment="#")
    assert list(frame.columns) == ["strategy", "t_process", "t_join_enrich", "t_obtain_subset",
                                   "threads", "rows_joined"]
    assert (frame[["t_process", "t_join_enrich", "t_obtain_subset"]] >= 0).all().all()
    assert "to join & enrich" in (tmp_path / "bench.txt").read_text()
    with pytest.raises(ValueError):
        run_benchmark(BenchConfig(small_store, None, query, repetitions=2))
