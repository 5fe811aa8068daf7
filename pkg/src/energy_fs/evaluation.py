"""Experiment layer: 1-hour-ahead supervised pairs, repeated k-fold CV,
cumulative feature-set ablation and the split-count importance report."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from ._io import atomic_write_csv, atomic_write_text
from .core import CATALOG, MetricsReport, TrainingMatrix
from .errors import EmptyInput, LengthMismatch, NoValidPairs
from .gbrt import GbrtParams, fit
from .pipelines import ALL_FEATURES
from .registry import Registry, get_subset

log = logging.getLogger(__name__)

TARGET = "energy"
HOUR = 3600
ABLATION_STEPS = (
    ("raw", "raw"),
    ("+statistical", "statistical"),
    ("+weather", "weather"),
    ("+building", "building_properties"),
    ("+time", "time"),
    ("+geolocation", "geolocation"),
    ("+sociological", "sociological"),
)


@dataclass(frozen=True)
class AblationRow:
    feature_set_label: str
    mse: float
    mae: float
    med_ae: float
    n_features: int


@dataclass(frozen=True)
class CvPlan:
    k: int = 10
    repeats: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if self.repeats < 1:
            raise ValueError("repeats must be positive")

    def folds(self, n: int, repeat: int) -> list[np.ndarray]:
        """Test-row indices of each fold for one repeat; sizes differ by at most 1."""
        if n < self.k:
            raise ValueError(f"{n} rows cannot fill {self.k} folds")
        perm = np.random.default_rng(self.seed + repeat).permutation(n)
        return np.array_split(perm, self.k)

    def fold_assignment(self, n: int, repeat: int = 0) -> np.ndarray:
        out = np.empty(n, dtype=np.int64)
        for j, idx in enumerate(self.folds(n, repeat)):
            out[idx] = j
        return out


def feature_sets(catalog=CATALOG, available: Sequence[str] | None = None):
    """Cumulative ``(label, features)`` pairs in fixed ablation order."""
    acc: list[str] = []
    out = []
    for label, sub in ABLATION_STEPS:
        names = catalog.by_subcategory(sub)
        if available is not None:
            names = tuple(n for n in names if n in available)
        acc.extend(names)
        out.append((label, tuple(acc)))
    return out


def load_matrix(registry: Registry, features: Sequence[str] = ALL_FEATURES,
                entity_ids=None) -> TrainingMatrix:
    """Every consumption row of the store joined with ``features``."""
    store = registry.store
    if entity_ids is None:
        meta = store.read("metadata", columns=["residential_id"])
        entity_ids = meta["residential_id"].astype(str).tolist()
    t0, t1 = store.time_bounds()
    return get_subset(registry, entity_ids, t0, t1, features)


def build_supervised(matrix: TrainingMatrix, horizon: int = 1, target: str = TARGET):
    """Pair each row ``(e, t)`` with the target value at ``(e, t + horizon h)``.

    Returns ``(features, y)``: the feature matrix keeps every column of
    ``matrix`` (including the current hour's energy, never the future one).
    """
    if target not in matrix.columns:
        raise NoValidPairs(f"matrix lacks the {target!r} column")
    val, miss = matrix.column(target)
    ents = matrix.entities.astype(str)
    step = int(horizon) * HOUR
    frame = pd.DataFrame({"e": ents, "t": matrix.timestamps, "row": np.arange(len(matrix))})
    fut = frame.rename(columns={"row": "nxt"})
    fut["t"] = fut["t"] - step
    pairs = frame.merge(fut, on=["e", "t"], how="inner", sort=False)
    pairs = pairs.loc[~miss[pairs["nxt"].to_numpy()]]
    if pairs.empty:
        raise NoValidPairs("no row has a successor one horizon ahead")
    pairs = pairs.sort_values("row", kind="stable")
    y = val[pairs["nxt"].to_numpy()]
    return matrix.take(pairs["row"].to_numpy()), np.array(y, dtype=np.float64)


def metrics(y_true, y_pred) -> tuple[float, float, float]:
    """(mse, mae, median absolute error)."""
    a = np.asarray(y_true, dtype=np.float64).ravel()
    b = np.asarray(y_pred, dtype=np.float64).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"{a.size} targets vs {b.size} predictions")
    if a.size == 0:
        raise EmptyInput("metrics need at least one pair")
    err = a - b
    abs_err = np.abs(err)
    return float(np.mean(err * err)), float(np.mean(abs_err)), float(np.median(abs_err))


FitFn = Callable[[np.ndarray, np.ndarray, GbrtParams, Sequence[str]], object]


def _gbrt_fit(X, y, params, names):
    return fit(X, y, params, names)


def assert_no_leak(X, y) -> None:
    """Fail if any feature column reproduces the target vector."""
    for j in range(X.shape[1]):
        if np.array_equal(X[:, j], y):
            raise AssertionError(f"feature column {j} equals the target")


def cross_validate(features, target, params: GbrtParams, plan: CvPlan,
                   fit_fn: FitFn = _gbrt_fit) -> MetricsReport:
    """Mean of fold metrics over ``plan.repeats`` shuffles of ``plan.k`` folds.

    ``features`` is a TrainingMatrix or 2-d array; ``fit_fn`` returns any
    object with ``predict(X)``.
    """
    if isinstance(features, TrainingMatrix):
        names = list(features.columns)
        X = features.data
    else:
        X = np.asarray(features, dtype=np.float64)
        names = [f"f{j}" for j in range(X.shape[1])]
    y = np.asarray(target, dtype=np.float64)
    if X.shape[0] != y.shape[0]:
        raise LengthMismatch("features and target differ in length")
    assert_no_leak(X, y)
    scores = []
    for rep in range(plan.repeats):
        folds = plan.folds(len(y), rep)
        for j, test in enumerate(folds):
            train = np.concatenate([f for i, f in enumerate(folds) if i != j])
            model = fit_fn(X[train], y[train], params, names)
            scores.append(metrics(y[test], model.predict(X[test])))
            log.debug("repeat %d fold %d: mse %.5g", rep, j, scores[-1][0])
    s = np.array(scores)  # fixed fold order
    return MetricsReport(float(s[:, 0].mean()), float(s[:, 1].mean()), float(s[:, 2].mean()),
                         plan.k, plan.repeats, plan.seed)


def _supervised(registry: Registry, matrix: TrainingMatrix | None):
    if matrix is None:
        matrix = load_matrix(registry)
    X, y = build_supervised(matrix)
    # the target is energy one hour later; the current hour's energy stays a feature
    return X, y


def ablation(registry: Registry, params: GbrtParams, plan: CvPlan,
             matrix: TrainingMatrix | None = None) -> list[AblationRow]:
    """One cross-validation per cumulative feature set, all with the same plan."""
    X, y = _supervised(registry, matrix)
    rows = []
    for label, names in feature_sets(registry.catalog, X.columns):
        report = cross_validate(X.select(names), y, params, plan)
        rows.append(AblationRow(label, report.mse, report.mae, report.med_ae, len(names)))
        log.info("%-14s n=%2d mse %.5f mae %.5f", label, len(names), report.mse, report.mae)
    return rows


def ablation_frame(rows: Sequence[AblationRow]) -> pd.DataFrame:
    return pd.DataFrame({
        "feature_set": [r.feature_set_label for r in rows],
        "n_features": [r.n_features for r in rows],
        "mse": [r.mse for r in rows],
        "mae": [r.mae for r in rows],
        "med_ae": [r.med_ae for r in rows],
    })


def render_ablation(rows: Sequence[AblationRow]) -> str:
    lines = [f"{'feature set':<16}{'n':>4}{'MSE [kWh²]':>12}{'MAE [kWh]':>12}{'medAE [kWh]':>13}"]
    for r in rows:
        lines.append(f"{r.feature_set_label:<16}{r.n_features:>4}{r.mse:>12.4f}{r.mae:>12.4f}"
                     f"{r.med_ae:>13.4f}")
    return "\n".join(lines) + "\n"


def importance_report(registry: Registry, params: GbrtParams, kind: str = "split_count",
                      matrix: TrainingMatrix | None = None) -> list[tuple[str, float]]:
    """Fit on the full feature set; features with no splits are left out."""
    X, y = _supervised(registry, matrix)
    model = fit(X.data, y, params, X.columns)
    return list(model.importance(kind).items())


def importance_frame(scores: Sequence[tuple[str, float]]) -> pd.DataFrame:
    return pd.DataFrame({"rank": np.arange(1, len(scores) + 1),
                         "feature": [n for n, _ in scores],
                         "score": [s for _, s in scores]})


def render_importance(scores: Sequence[tuple[str, float]]) -> str:
    if not scores:
        return "(no splits)\n"
    top = max(s for _, s in scores)
    width = max(len(n) for n, _ in scores)
    lines = []
    for name, s in scores:
        bar = "#" * int(round(40 * s / top)) if top > 0 else ""
        lines.append(f"{name:<{width}} {s:>12.6g} {bar}")
    return "\n".join(lines) + "\n"


def write_table(frame: pd.DataFrame, text: str, out, prov=None):
    """CSV at ``out`` plus a plain-text rendering next to it (``.txt``)."""
    path = atomic_write_csv(out, frame, prov, float_format="%.10g")
    atomic_write_text(path.with_suffix(".txt"), text)
    return path
