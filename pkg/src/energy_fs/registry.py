"""The feature store proper: a registry of feature views over offline tables
and a TTL-bounded point-in-time join that serves training matrices.

Registry files are line oriented::

    source consumption path=consumption.parquet
    link residential_id region source=metadata
    view residential_hourly_stats entity=residential_id source=consumption ttl=3600
        feature energy float
        feature energy_mean float

``link`` lines let a query keyed by one entity read a view keyed by another
(here: households to their weather station region).
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from ._io import atomic_write_text
from .core import CATALOG, EntityKey, FeatureCatalog, FeatureView, TrainingMatrix, parse_views, validate_view
from .errors import (DuplicateView, EmptyRange, InvalidView, RegistryParseError, UnknownFeature,
                     UnknownSource)
from .features import ROW_FEATURES, enrich_rows
from .kernels import asof_indices
from .store import OfflineStore

logger = logging.getLogger(__name__)

DRIVING_SOURCE = "consumption"
REGISTRY_FILE = "registry.txt"


def default_registry_text() -> str:
    return resources.files("energy_fs").joinpath("data/registry.txt").read_text(encoding="utf-8")


@dataclass(frozen=True)
class EntityQuery:
    """Query rows ``(entity value, timestamp)`` plus requested ``view:feature`` names."""

    entity_name: str
    entities: np.ndarray
    timestamps: np.ndarray
    requested: tuple[str, ...]

    def __post_init__(self):
        ents = np.asarray(self.entities, dtype=object)
        ts = np.asarray(self.timestamps, dtype=np.int64)
        if ents.shape != ts.shape:
            raise ValueError("entities and timestamps differ in length")
        object.__setattr__(self, "entities", ents)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "requested", tuple(self.requested))

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[EntityKey, int]], requested) -> EntityQuery:
        if not rows:
            raise ValueError("query rows must be non-empty")
        names = {k.entity_name for k, _ in rows}
        if len(names) != 1:
            raise ValueError("all query rows must use one entity name")
        return cls(names.pop(), [k.value for k, _ in rows], [t for _, t in rows], requested)


class Registry:
    """Views, sources and entity links over one offline store.

    Registration and lookups never open source data. Mutations take a lock;
    joins only read registry state and may run concurrently.
    """

    def __init__(self, store, catalog: FeatureCatalog = CATALOG):
        self.store = store if isinstance(store, OfflineStore) else OfflineStore(store)
        self.catalog = catalog
        self.views: dict[str, FeatureView] = {}
        self.sources: dict[str, Path] = {}
        self.links: dict[tuple[str, str], str] = {}
        self._lock = threading.Lock()

    def add_source(self, name: str, path) -> None:
        p = Path(path)
        if not p.is_absolute():
            p = self.store.root / p
        with self._lock:
            self.sources[name] = p

    def add_link(self, from_entity: str, to_entity: str, source: str) -> None:
        if source not in self.sources:
            raise UnknownSource(f"link source {source!r} is not registered")
        with self._lock:
            self.links[(from_entity, to_entity)] = source

    def view(self, name: str) -> FeatureView:
        return self.views[name]

    def to_text(self) -> str:
        lines = []
        for name, path in self.sources.items():
            try:
                rel = path.relative_to(self.store.root)
            except ValueError:
                rel = path
            lines.append(f"source {name} path={rel}")
        for (a, b), src in self.links.items():
            lines.append(f"link {a} {b} source={src}")
        out = "\n".join(lines) + "\n"
        for view in self.views.values():
            out += "\n" + view.to_text()
        return out

    def save(self, path=None) -> Path:
        return atomic_write_text(path or self.store.root / REGISTRY_FILE, self.to_text())

    @classmethod
    def from_text(cls, text: str, store, catalog: FeatureCatalog = CATALOG) -> Registry:
        reg = cls(store, catalog)
        for lineno, raw in enumerate(text.splitlines(), 1):
            parts = raw.split("#", 1)[0].split()
            if not parts:
                continue
            if parts[0] == "source":
                if len(parts) != 3 or not parts[2].startswith("path="):
                    raise RegistryParseError(f"line {lineno}: expected 'source <name> path=<file>'")
                reg.add_source(parts[1], parts[2][5:])
            elif parts[0] == "link":
                if len(parts) != 4 or not parts[3].startswith("source="):
                    raise RegistryParseError(f"line {lineno}: expected 'link <from> <to> source=<table>'")
                reg.add_link(parts[1], parts[2], parts[3][7:])
            elif parts[0] not in ("view", "feature"):
                raise RegistryParseError(f"line {lineno}: unknown directive {parts[0]!r}")
        for view in parse_views(text, catalog):
            register_view(reg, view)
        return reg

    @classmethod
    def load(cls, path, store, catalog: FeatureCatalog = CATALOG) -> Registry:
        return cls.from_text(Path(path).read_text(encoding="utf-8"), store, catalog)

    def resolve(self, requested: str) -> tuple[FeatureView, str]:
        """``view:feature`` (or a feature name unique across views) to its view."""
        view_name, sep, feature = requested.partition(":")
        if sep:
            view = self.views.get(view_name)
            if view is None or feature not in view.feature_names:
                raise UnknownFeature(f"unknown feature {requested!r}")
            return view, feature
        owners = [v for v in self.views.values() if requested in v.feature_names]
        if len(owners) != 1:
            raise UnknownFeature(f"feature {requested!r} matches {len(owners)} views")
        return owners[0], requested

    def all_features(self) -> list[str]:
        return [f"{v.name}:{f}" for v in self.views.values() for f in v.feature_names]


def register_view(registry: Registry, view: FeatureView) -> Registry:
    """Add ``view`` after validating it; touches metadata only."""
    problems = validate_view(view, registry.catalog)
    if problems:
        raise InvalidView(f"view {view.name!r}: " + "; ".join(problems))
    with registry._lock:
        if view.name in registry.views:
            raise DuplicateView(f"view {view.name!r} already registered")
        path = registry.sources.get(view.source)
        if path is None or not path.exists():
            raise UnknownSource(f"view {view.name!r} uses unregistered source {view.source!r}")
        registry.views[view.name] = view
    return registry


class _SourceCache:
    """Per-join cache of loaded (and enriched) source tables."""

    def __init__(self, registry: Registry):
        self.registry = registry
        self.tables: dict[tuple[str, str], pd.DataFrame] = {}
        self._context = None

    def context(self):
        if self._context is None:
            self._context = self.registry.store.context()
        return self._context

    def load(self, source: str, key: str, keys, derived: set[str]) -> pd.DataFrame:
        cache_key = (source, key)
        frame = self.tables.get(cache_key)
        if frame is None:
            frame = self.registry.store.read_file(self.registry.sources[source], key=key, values=keys)
            frame = frame.reset_index(drop=True)
            order = np.lexsort((frame["timestamp"].to_numpy(), frame[key].astype(str).to_numpy()))
            frame = frame.iloc[order].reset_index(drop=True)
            frame[key] = frame[key].astype(str)
            self.tables[cache_key] = frame
        missing = [d for d in derived if d not in frame.columns]
        if missing:
            energy = frame["energy"].to_numpy(dtype=np.float64) if "energy" in frame else np.full(len(frame), np.nan)
            produced = enrich_rows(frame[key].to_numpy(dtype=object), frame["timestamp"].to_numpy(),
                                   energy, sorted(missing), self.context())
            for name, values in produced.items():
                frame[name] = values
        return frame


def _column_values(frame: pd.DataFrame, feature: str, spec_dtype: str, codes) -> np.ndarray:
    col = frame[feature]
    if spec_dtype == "category":
        return codes.encode(feature, col.to_numpy(dtype=object))
    if spec_dtype == "bool":
        return col.astype(float).to_numpy(dtype=np.float64, na_value=np.nan)
    return pd.to_numeric(col).to_numpy(dtype=np.float64, na_value=np.nan)


def point_in_time_join(registry: Registry, query: EntityQuery) -> TrainingMatrix:
    """Attach to every query row the latest in-TTL value of each requested feature.

    For a row ``(e, t)`` and a feature of view V with TTL ``ttl``, the value
    comes from the last source record ``(e, t')`` with ``t' <= t`` and
    ``t - t' <= ttl`` (inclusive); otherwise the cell is masked. Row order
    follows the query, column order follows ``query.requested``.
    """
    resolved = [registry.resolve(r) for r in query.requested]
    names = [f for _, f in resolved]
    columns = [f if names.count(f) == 1 else f"{v.name}:{f}" for v, f in resolved]
    n = len(query.entities)
    data = np.full((n, len(columns)), np.nan)
    if n == 0 or not columns:
        return TrainingMatrix(query.entities, query.timestamps, columns, data,
                              np.ones_like(data, dtype=bool), entity_name=query.entity_name)
    cache = _SourceCache(registry)
    codes = registry.store.categories()
    q_ents = query.entities.astype(str)

    by_view: dict[str, list[int]] = {}
    for j, (view, _) in enumerate(resolved):
        by_view.setdefault(view.name, []).append(j)

    for view_name, col_idx in by_view.items():
        view = registry.views[view_name]
        keys = _view_keys(registry, cache, query.entity_name, view.entity, q_ents)
        feats = [resolved[j][1] for j in col_idx]
        derived = {f for f in feats if f in ROW_FEATURES}
        present = keys[keys != ""]
        frame = cache.load(view.source, view.entity, np.unique(present), derived)
        src_keys = frame[view.entity].to_numpy(dtype=object)
        src_ts = frame["timestamp"].to_numpy(dtype=np.int64)
        if len(src_ts) > 1:
            same = (src_keys[1:] == src_keys[:-1]) & (src_ts[1:] == src_ts[:-1])
            if same.any():
                logger.warning("view %s: %d duplicate (entity, timestamp) records; keeping the last read",
                               view.name, int(same.sum()))
        codes_all, uniques = pd.factorize(np.concatenate([src_keys, keys]), sort=True)
        src_codes = codes_all[:len(src_keys)]
        q_codes = codes_all[len(src_keys):]
        idx = asof_indices(src_codes, src_ts, q_codes, query.timestamps, view.ttl)
        hit = idx >= 0
        take = np.where(hit, idx, 0)
        for j, feat in zip(col_idx, feats):
            spec = next(s for s in view.features if s.name == feat)
            values = _column_values(frame, feat, spec.dtype, codes) if len(frame) else np.zeros(0)
            col = np.full(n, np.nan)
            if len(values):
                col[hit] = values[take[hit]]
            data[:, j] = col
    return TrainingMatrix(query.entities, query.timestamps, columns, data, np.isnan(data),
                          entity_name=query.entity_name)


def _view_keys(registry, cache, query_entity, view_entity, q_ents) -> np.ndarray:
    if view_entity == query_entity:
        return q_ents
    source = registry.links.get((query_entity, view_entity))
    if source is None:
        raise UnknownFeature(f"no link from entity {query_entity!r} to {view_entity!r}")
    frame = cache.load(source, query_entity, np.unique(q_ents), set())
    mapping = dict(zip(frame[query_entity].astype(str), frame[view_entity].astype(str)))
    return np.array([mapping.get(e, "") for e in q_ents], dtype=object)


def get_subset(registry: Registry, entity_ids, t0: int, t1: int, features) -> TrainingMatrix:
    """Serve every driving-view row of ``entity_ids`` with ``t0 <= t <= t1``.

    Query rows are the consumption timestamps, ordered by the given entity
    order, then by time.
    """
    if t0 > t1:
        raise EmptyRange(f"empty range: {t0} > {t1}")
    entity_ids = [str(e) for e in entity_ids]
    src = registry.sources.get(DRIVING_SOURCE)
    if src is None:
        raise UnknownSource(f"driving source {DRIVING_SOURCE!r} is not registered")
    entity_name = next((v.entity for v in registry.views.values() if v.source == DRIVING_SOURCE),
                       "residential_id")
    rows = registry.store.read_file(src, columns=[entity_name, "timestamp"], key=entity_name,
                                    values=entity_ids)
    ts = rows["timestamp"].to_numpy(dtype=np.int64)
    rows = rows.loc[(ts >= t0) & (ts <= t1)]
    rank = {e: i for i, e in enumerate(dict.fromkeys(entity_ids))}
    ent = rows[entity_name].astype(str).to_numpy(dtype=object)
    order = np.lexsort((rows["timestamp"].to_numpy(), np.array([rank[e] for e in ent], dtype=np.int64)))
    query = EntityQuery(entity_name, ent[order], rows["timestamp"].to_numpy()[order], tuple(features))
    return point_in_time_join(registry, query)
