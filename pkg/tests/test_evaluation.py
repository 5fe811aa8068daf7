import numpy as np
import pandas as pd
import pytest

from energy_fs.core import CATALOG, TrainingMatrix
from energy_fs.errors import EmptyInput, LengthMismatch, NoValidPairs
from energy_fs.evaluation import (ABLATION_STEPS, CvPlan, ablation, ablation_frame, assert_no_leak,
                                  build_supervised, cross_validate, feature_sets,
                                  importance_report, load_matrix, metrics, render_ablation,
                                  render_importance, write_table)
from energy_fs.gbrt import GbrtParams
from energy_fs.registry import Registry, default_registry_text

FAST = GbrtParams(n_rounds=10, max_depth=3, min_samples_leaf=10)


def _hourly(entity, hours, start=0, value=None):
    ts = start + 3600 * np.asarray(hours, dtype=np.int64)
    energy = np.arange(len(ts), dtype=float) if value is None else np.full(len(ts), value)
    return TrainingMatrix([entity] * len(ts), ts, ["energy", "temperature"],
                          np.column_stack([energy, energy * 0.5]))


def _concat(*ms):
    return TrainingMatrix(np.concatenate([m.entities for m in ms]),
                          np.concatenate([m.timestamps for m in ms]), ms[0].columns,
                          np.concatenate([m.data for m in ms]))


def test_pairs_one_day():
    X, y = build_supervised(_hourly("h", range(24)))
    assert len(y) == 23
    np.testing.assert_array_equal(y, np.arange(1, 24))
    np.testing.assert_array_equal(X.column("energy")[0], np.arange(23))


def test_gap_drops_row():
    X, y = build_supervised(_hourly("h", [0, 1, 2, 4, 5]))
    # hour 2 has no successor at hour 3
    assert X.timestamps.tolist() == [0, 3600, 4 * 3600]
    assert y.tolist() == [1, 2, 4]


def test_last_row_of_each_entity_dropped():
    m = _concat(_hourly("a", range(5)), _hourly("b", range(3)))
    X, y = build_supervised(m)
    assert len(y) == 4 + 2
    assert not any((e == "a" and t == 4 * 3600) or (e == "b" and t == 2 * 3600)
                   for e, t in zip(X.entities, X.timestamps))


def test_pairs_never_cross_entities():
    m = _concat(_hourly("a", range(3), value=1.0), _hourly("b", range(3), value=9.0))
    X, y = build_supervised(m)
    for e, v in zip(X.entities, y):
        assert v == (1.0 if e == "a" else 9.0)


def test_masked_future_target_dropped():
    m = _hourly("h", range(4))
    data = m.data.copy()
    data[2, 0] = np.nan
    m = TrainingMatrix(m.entities, m.timestamps, m.columns, data)
    X, y = build_supervised(m)
    assert X.timestamps.tolist() == [0, 2 * 3600]  # the row at hour 1 would target a gap
    assert np.all(np.isfinite(y))


def test_no_valid_pairs():
    with pytest.raises(NoValidPairs):
        build_supervised(_hourly("h", [0, 5, 10]))


def test_metrics_examples():
    assert metrics([1, 2, 3], [1, 2, 3]) == (0.0, 0.0, 0.0)
    assert metrics([0, 2], [1, 1]) == (1.0, 1.0, 1.0)
    with pytest.raises(LengthMismatch):
        metrics([1, 2], [1])
    with pytest.raises(EmptyInput):
        metrics([], [])


def test_metrics_match_loop_oracle(rng):
    for _ in range(200):
        n = int(rng.integers(1, 60))
        a, b = rng.normal(size=n), rng.normal(size=n)
        sq = sum((x - z) ** 2 for x, z in zip(a, b)) / n
        ab = sorted(abs(x - z) for x, z in zip(a, b))
        mid = n // 2
        med = ab[mid] if n % 2 else 0.5 * (ab[mid - 1] + ab[mid])
        got = metrics(a, b)
        assert got[0] == pytest.approx(sq, abs=1e-12)
        assert got[1] == pytest.approx(sum(ab) / n, abs=1e-12)
        assert got[2] == pytest.approx(med, abs=1e-12)


def test_fold_partition():
    plan = CvPlan(k=10, repeats=3, seed=4)
    for rep in range(plan.repeats):
        folds = plan.folds(101, rep)
        assert sorted(len(f) for f in folds) == [10] * 9 + [11]
        assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(101))
    assert not np.array_equal(plan.fold_assignment(101, 0), plan.fold_assignment(101, 1))
    with pytest.raises(ValueError):
        plan.folds(5, 0)
    with pytest.raises(ValueError):
        CvPlan(k=1)


class _MeanModel:
    def __init__(self, y):
        self.mu = float(np.mean(y))

    def predict(self, X):
        return np.full(len(X), self.mu)


def test_mean_predictor_scores_variance(rng):
    X = rng.normal(size=(2000, 2))
    y = rng.normal(3.0, 2.0, size=2000)
    report = cross_validate(X, y, FAST, CvPlan(k=2, repeats=1),
                            fit_fn=lambda X, y, p, n: _MeanModel(y))
    assert report.mse == pytest.approx(np.var(y), rel=0.02)


def test_cross_validate_deterministic(rng):
    X = rng.normal(size=(300, 3))
    y = X[:, 0] + 0.1 * rng.normal(size=300)
    plan = CvPlan(k=3, repeats=2, seed=5)
    assert cross_validate(X, y, FAST, plan) == cross_validate(X, y, FAST, plan)


def test_leak_guard(rng):
    X = rng.normal(size=(50, 3))
    with pytest.raises(AssertionError):
        assert_no_leak(X, X[:, 1].copy())
    assert_no_leak(X, X[:, 1] + 1)


def test_feature_sets_cumulative():
    sets = feature_sets(CATALOG)
    assert [label for label, _ in sets] == [label for label, _ in ABLATION_STEPS]
    for (_, a), (_, b) in zip(sets, sets[1:]):
        assert b[:len(a)] == a
    assert sets[0][1] == ("energy",)
    assert set(sets[-1][1]) == set(CATALOG.names)


@pytest.fixture(scope="module")
def matrix(small_store):
    return load_matrix(Registry.from_text(default_registry_text(), small_store))


def test_load_matrix_covers_store(small_store, small_registry, matrix):
    cons = pd.read_parquet(small_store / "consumption.parquet")
    assert len(matrix) == len(cons)


def test_supervised_target_is_future_energy(matrix):
    X, y = build_supervised(matrix)
    energy, _ = matrix.column("energy")
    lookup = {(e, t): v for e, t, v in zip(matrix.entities, matrix.timestamps, energy)}
    for i in range(0, len(y), 97):
        assert y[i] == lookup[(X.entities[i], X.timestamps[i] + 3600)]


def test_ablation_small(small_registry, matrix, tmp_path):
    rows = ablation(small_registry, FAST, CvPlan(k=2, repeats=1), matrix=matrix)
    assert [r.feature_set_label for r in rows] == [label for label, _ in ABLATION_STEPS]
    assert [r.n_features for r in rows] == sorted(r.n_features for r in rows)
    assert all(r.mse > 0 and r.mae > 0 for r in rows)
    frame = ablation_frame(rows)
    path = write_table(frame, render_ablation(rows), tmp_path / "abl.csv", {"seed": 0})
    back = pd.read_csv(path, comment="#")
    assert len(back) == 7 and list(back["feature_set"]) == [r.feature_set_label for r in rows]
    assert "+sociological" in (tmp_path / "abl.txt").read_text()


def test_importance_report(small_registry, matrix):
    scores = importance_report(small_registry, FAST, matrix=matrix)
    names = [n for n, _ in scores]
    assert len(names) == len(set(names))
    assert all(s > 0 for _, s in scores)
    assert [s for _, s in scores] == sorted((s for _, s in scores), reverse=True)
    assert sum(s for _, s in scores) <= FAST.n_rounds * (2 ** FAST.max_depth - 1)
    assert "#" in render_importance(scores)
    assert render_importance([]) == "(no splits)\n"
