"""Gradient-boosted regression trees with squared-error loss.

Each round fits a depth-limited tree to the current residuals and adds
``learning_rate * leaf_mean`` to the running prediction. No L1/L2 or
gamma terms; ``min_samples_leaf`` and ``max_depth`` bound complexity.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ._io import atomic_write_text, header_line
from .core import TrainingMatrix
from .errors import ModelFormatError, TooFewRows, WidthMismatch
from .kernels.trees import flatten, grow_tree, predict_forest, presort

log = logging.getLogger(__name__)

FORMAT_TAG = "energy-fs-gbrt 1"
IMPORTANCE_KINDS = ("split_count", "total_gain")
_NODE_FIELDS = ("feature", "threshold", "left", "right", "default_left", "value", "gain", "count")


@dataclass(frozen=True)
class GbrtParams:
    n_rounds: int = 200
    max_depth: int = 6
    learning_rate: float = 0.1
    min_samples_leaf: int = 20
    seed: int = 0
    subsample: float = 1.0

    def __post_init__(self):
        for name in ("n_rounds", "max_depth", "min_samples_leaf"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must lie in (0, 1]")


@dataclass
class GbrtModel:
    base_score: float
    feature_names: tuple[str, ...]
    params: GbrtParams
    trees: list[dict] = field(default_factory=list)
    train_mse: list[float] = field(default_factory=list)  # after each round; [0] is base only
    _flat: dict | None = field(default=None, repr=False, compare=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_splits(self) -> int:
        return int(sum((t["feature"] >= 0).sum() for t in self.trees))

    @property
    def split_counts(self) -> dict[str, int]:
        counts = np.zeros(self.n_features, dtype=np.int64)
        for t in self.trees:
            f = t["feature"]
            np.add.at(counts, f[f >= 0], 1)
        return {n: int(c) for n, c in zip(self.feature_names, counts) if c > 0}

    @property
    def split_gains(self) -> dict[str, float]:
        gains = np.zeros(self.n_features)
        used = np.zeros(self.n_features, dtype=bool)
        for t in self.trees:
            f = t["feature"]
            for j, g in zip(f[f >= 0], t["gain"][f >= 0]):
                gains[j] += g
                used[j] = True
        return {n: float(g) for n, g, u in zip(self.feature_names, gains, used) if u}

    def importance(self, kind: str = "split_count") -> dict[str, float]:
        """Per-feature scores in descending order; unused features are absent."""
        if kind not in IMPORTANCE_KINDS:
            raise ValueError(f"unknown importance kind {kind!r}")
        scores = self.split_counts if kind == "split_count" else self.split_gains
        order = sorted(scores, key=lambda n: (-scores[n], self.feature_names.index(n)))
        return {n: scores[n] for n in order}

    def predict(self, X) -> np.ndarray:
        X = _as_features(X, self.feature_names)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise WidthMismatch(f"expected {self.n_features} features, got "
                                f"{X.shape[1] if X.ndim == 2 else X.shape}")
        if self._flat is None:
            self._flat = flatten(self.trees)
        return predict_forest(X, self.base_score, self.params.learning_rate, self._flat)

    def to_text(self, prov=None) -> str:
        lines = [header_line(prov).rstrip("\n")] if prov else []
        lines.append(FORMAT_TAG)
        lines.append("params " + " ".join(f"{k}={v!r}" for k, v in asdict(self.params).items()))
        lines.append(f"base_score {self.base_score!r}")
        lines.append("features " + " ".join(self.feature_names))
        lines.append("train_mse " + " ".join(repr(float(v)) for v in self.train_mse))
        lines.append(f"trees {len(self.trees)}")
        for k, t in enumerate(self.trees):
            lines.append(f"tree {k} nodes={len(t['feature'])}")
            for i in range(len(t["feature"])):
                lines.append(" ".join([
                    str(int(t["feature"][i])), repr(float(t["threshold"][i])),
                    str(int(t["left"][i])), str(int(t["right"][i])),
                    str(int(bool(t["default_left"][i]))), repr(float(t["value"][i])),
                    repr(float(t["gain"][i])), str(int(t["count"][i]))]))
        return "\n".join(lines) + "\n"

    def save(self, path, prov=None):
        return atomic_write_text(path, self.to_text(prov))

    @classmethod
    def from_text(cls, text: str) -> GbrtModel:
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        try:
            if lines[0] != FORMAT_TAG:
                raise ModelFormatError(f"unrecognised header {lines[0]!r}")
            kv = dict(tok.split("=", 1) for tok in lines[1].split()[1:])
            params = GbrtParams(
                n_rounds=int(kv["n_rounds"]), max_depth=int(kv["max_depth"]),
                learning_rate=float(kv["learning_rate"]),
                min_samples_leaf=int(kv["min_samples_leaf"]), seed=int(kv["seed"]),
                subsample=float(kv["subsample"]))
            base = float(lines[2].split()[1])
            names = tuple(lines[3].split()[1:])
            mse = [float(v) for v in lines[4].split()[1:]]
            n_trees = int(lines[5].split()[1])
            trees, pos = [], 6
            for _ in range(n_trees):
                n_nodes = int(lines[pos].split("nodes=")[1])
                rows = [ln.split() for ln in lines[pos + 1:pos + 1 + n_nodes]]
                if len(rows) != n_nodes:
                    raise ModelFormatError("truncated tree")
                pos += 1 + n_nodes
                cols = list(zip(*rows))
                tree = {
                    "feature": np.array(cols[0], dtype=np.int64),
                    "threshold": np.array([float(v) for v in cols[1]]),
                    "left": np.array(cols[2], dtype=np.int64),
                    "right": np.array(cols[3], dtype=np.int64),
                    "default_left": np.array([v == "1" for v in cols[4]]),
                    "value": np.array([float(v) for v in cols[5]]),
                    "gain": np.array([float(v) for v in cols[6]]),
                    "count": np.array(cols[7], dtype=np.int64),
                }
                if (tree["feature"] >= len(names)).any():
                    raise ModelFormatError("split feature index out of range")
                trees.append(tree)
        except (IndexError, KeyError, ValueError) as exc:
            raise ModelFormatError(f"malformed model text: {exc}") from exc
        return cls(base, names, params, trees, mse)

    @classmethod
    def load(cls, path) -> GbrtModel:
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def _as_features(X, names=None) -> np.ndarray:
    if isinstance(X, TrainingMatrix):
        if names is not None and set(names) <= set(X.columns):
            X = X.select(list(names))
        return np.ascontiguousarray(X.data)
    return np.ascontiguousarray(np.asarray(X, dtype=np.float64))


def fit(X, y=None, params: GbrtParams | None = None,
        feature_names: Sequence[str] | None = None) -> GbrtModel:
    """Fit a boosted ensemble.

    ``X`` may be a 2-d array (with ``y`` as the target vector) or a
    TrainingMatrix, in which case ``y`` names the target column and every
    other column is a feature.
    """
    params = params or GbrtParams()
    if isinstance(X, TrainingMatrix):
        target = y if isinstance(y, str) else X.target
        if target is None:
            raise ValueError("target column required")
        tv, tm = X.column(target)
        if tm.any():
            raise ValueError(f"target {target!r} has missing cells")
        names = [c for c in X.columns if c != target]
        y = np.array(tv)
        X = X.select(names).data
        feature_names = names
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise WidthMismatch("X rows and y length differ")
    if X.shape[0] < 2:
        raise TooFewRows(f"need at least 2 rows, got {X.shape[0]}")
    if not np.isfinite(y).all():
        raise ValueError("target must be finite")
    n, m = X.shape
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{j}" for j in range(m))
    if len(names) != m:
        raise WidthMismatch("feature_names length differs from X width")

    base = float(y.mean())
    model = GbrtModel(base, names, params)
    pred = np.full(n, base)
    r = y - pred
    model.train_mse.append(float(np.mean(r * r)))
    sst = float(np.sum(r * r))
    if sst == 0.0:
        log.info("constant target; model is base score only")
        return model
    min_gain = 1e-12 * sst
    pre = presort(X)
    rng = np.random.default_rng(params.seed)
    in_bag = np.ones(n, dtype=bool)
    lr = params.learning_rate
    for k in range(params.n_rounds):
        if params.subsample < 1.0:
            in_bag = rng.random(n) < params.subsample
            if in_bag.sum() < 2:
                in_bag[:] = True
        tree = grow_tree(X, r, in_bag, pre, params.max_depth, params.min_samples_leaf, min_gain)
        if tree["feature"][0] < 0 and params.subsample == 1.0:
            log.debug("round %d found no split; stopping", k)
            break
        step = predict_forest(X, 0.0, lr, flatten([tree]))
        pred = pred + step
        r = y - pred
        model.trees.append(tree)
        model.train_mse.append(float(np.mean(r * r)))
    log.info("fitted %d trees, %d splits, train mse %.6g", len(model.trees), model.n_splits,
             model.train_mse[-1])
    return model


def importance(model: GbrtModel, kind: str = "split_count") -> dict[str, float]:
    return model.importance(kind)


def predict(model: GbrtModel, X) -> np.ndarray:
    return model.predict(X)


def finite_leaves(model: GbrtModel) -> bool:
    return all(math.isfinite(v) for t in model.trees for v in t["value"])
