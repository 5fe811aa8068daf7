"""Domain types shared by every module: entities, feature specs and views,
the feature catalog and the training matrix produced by joins."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import RegistryParseError

TAXONOMY_ROOTS = ("domain_specific", "contextual", "behavioral")
DTYPES = ("float", "int", "category", "bool")

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class EntityKey:
    entity_name: str
    value: str

    def __post_init__(self):
        if not self.entity_name:
            raise ValueError("entity_name must be non-empty")
        if not self.value:
            raise ValueError("entity value must be non-empty")


@dataclass(frozen=True)
class EventRecord:
    """One timestamped observation for one entity.

    ``values`` may be given as a mapping or as ``(name, value)`` pairs; pairs
    are checked for duplicate names. ``None`` marks a missing value.
    """

    entity: EntityKey
    event_timestamp: int
    values: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        ts = self.event_timestamp
        if isinstance(ts, bool) or not isinstance(ts, (int, np.integer)):
            raise TypeError("event_timestamp must be integer epoch seconds")
        values = self.values
        if not isinstance(values, Mapping):
            pairs = list(values)
            names = [name for name, _ in pairs]
            if len(set(names)) != len(names):
                raise ValueError("duplicate feature names in record")
            values = dict(pairs)
        object.__setattr__(self, "event_timestamp", int(ts))
        object.__setattr__(self, "values", MappingProxyType(dict(values)))


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    dtype: str = "float"
    category_tag: str = "domain_specific"
    subcategory: str = "raw"

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise ValueError(f"unknown dtype {self.dtype!r}")
        if self.category_tag not in TAXONOMY_ROOTS:
            raise ValueError(f"category_tag must be one of {TAXONOMY_ROOTS}")


@dataclass(frozen=True)
class FeatureView:
    """Declarative recipe binding an entity, a source table, a TTL and features.

    Construction does not enforce the view invariants; use
    :func:`validate_view` to collect violations.
    """

    name: str
    entity: str
    ttl: int
    features: tuple[FeatureSpec, ...]
    source: str

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def to_text(self) -> str:
        lines = [f"view {self.name} entity={self.entity} source={self.source} ttl={self.ttl}"]
        for f in self.features:
            lines.append(f"    feature {f.name} {f.dtype} {f.category_tag}/{f.subcategory}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, catalog: FeatureCatalog | None = None) -> FeatureView:
        views = parse_views(text, catalog)
        if len(views) != 1:
            raise RegistryParseError(f"expected exactly one view, found {len(views)}")
        return views[0]


def parse_views(text: str, catalog: FeatureCatalog | None = None) -> list[FeatureView]:
    """Parse ``view``/``feature`` declarations, ignoring every other directive.

    A feature line may omit the ``tag/subcategory`` field, in which case it is
    looked up in ``catalog`` (falling back to the catalog default when the
    name is unknown, so :func:`validate_view` can report it).
    """
    views: list[FeatureView] = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        parts = line.split()
        if parts[0] == "view":
            if current is not None:
                views.append(FeatureView(**current))
            if len(parts) < 2:
                raise RegistryParseError(f"line {lineno}: view without a name")
            attrs = _parse_attrs(parts[2:], lineno)
            missing = {"entity", "source", "ttl"} - attrs.keys()
            if missing:
                raise RegistryParseError(f"line {lineno}: view lacks {sorted(missing)}")
            try:
                ttl = int(attrs["ttl"])
            except ValueError:
                raise RegistryParseError(f"line {lineno}: ttl must be integer seconds") from None
            current = dict(name=parts[1], entity=attrs["entity"], source=attrs["source"],
                           ttl=ttl, features=[])
        elif parts[0] == "feature":
            if current is None or not raw[:1].isspace():
                raise RegistryParseError(f"line {lineno}: feature outside an indented view block")
            if len(parts) not in (3, 4):
                raise RegistryParseError(f"line {lineno}: expected 'feature <name> <dtype> [tag/sub]'")
            name, dtype = parts[1], parts[2]
            if dtype not in DTYPES:
                raise RegistryParseError(f"line {lineno}: unknown dtype {dtype!r}")
            if len(parts) == 4:
                tag, _, sub = parts[3].partition("/")
                if tag not in TAXONOMY_ROOTS or not sub:
                    raise RegistryParseError(f"line {lineno}: bad taxonomy tag {parts[3]!r}")
            elif catalog is not None and name in catalog:
                spec = catalog[name]
                tag, sub = spec.category_tag, spec.subcategory
            else:
                tag, sub = "domain_specific", "raw"
            current["features"].append(FeatureSpec(name, dtype, tag, sub))
        else:
            if current is not None:
                views.append(FeatureView(**current))
                current = None
    if current is not None:
        views.append(FeatureView(**current))
    return views


def _parse_attrs(tokens: Sequence[str], lineno: int) -> dict[str, str]:
    attrs = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or not value:
            raise RegistryParseError(f"line {lineno}: expected key=value, got {tok!r}")
        attrs[key] = value
    return attrs


class FeatureCatalog:
    """Ordered collection of FeatureSpecs with unique names."""

    def __init__(self, entries: Iterable[FeatureSpec]):
        self.entries = tuple(entries)
        self._by_name = {e.name: e for e in self.entries}
        if len(self._by_name) != len(self.entries):
            raise ValueError("catalog entry names must be unique")

    def __contains__(self, name):
        return name in self._by_name

    def __getitem__(self, name) -> FeatureSpec:
        return self._by_name[name]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    def by_subcategory(self, subcategory: str) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries if e.subcategory == subcategory)


_D, _C, _B = TAXONOMY_ROOTS
HEATING_COOLING_FLAGS = ("SN", "FAGF", "FPG", "IFRHG", "NAC", "FAC", "PAC",
                         "BHE", "IFRHE", "WRHIR", "GEOTH")

CATALOG = FeatureCatalog([
    FeatureSpec("energy", "float", _D, "raw"),
    FeatureSpec("energy_mean", "float", _D, "statistical"),
    FeatureSpec("energy_std", "float", _D, "statistical"),
    FeatureSpec("temperature", "float", _C, "weather"),
    FeatureSpec("humidity", "float", _C, "weather"),
    FeatureSpec("pressure", "float", _C, "weather"),
    FeatureSpec("weather", "category", _C, "weather"),
    FeatureSpec("solar_altitude", "float", _C, "weather"),
    FeatureSpec("solar_azimuth", "float", _C, "weather"),
    FeatureSpec("solar_radiation", "float", _C, "weather"),
    FeatureSpec("residential_id", "category", _C, "building_properties"),
    FeatureSpec("house_type", "category", _C, "building_properties"),
    FeatureSpec("facing", "category", _C, "building_properties"),
    FeatureSpec("RUs", "int", _C, "building_properties"),
    *(FeatureSpec(flag, "bool", _D, "building_properties") for flag in HEATING_COOLING_FLAGS),
    FeatureSpec("day_percent", "float", _C, "time"),
    FeatureSpec("year_percent", "float", _C, "time"),
    FeatureSpec("is_holiday", "bool", _B, "sociological"),
    FeatureSpec("weekday", "int", _B, "sociological"),
    FeatureSpec("is_weekend", "bool", _B, "sociological"),
    FeatureSpec("region", "category", _C, "sociological"),
    FeatureSpec("latitude", "float", _C, "geolocation"),
    FeatureSpec("longitude", "float", _C, "geolocation"),
])


def validate_view(view: FeatureView, catalog: FeatureCatalog = CATALOG) -> list[str]:
    """Return every invariant violation of ``view``; an empty list means ok."""
    violations = []
    if not view.name or not _IDENT.match(view.name):
        violations.append(f"invalid view name {view.name!r}")
    if not view.entity:
        violations.append("empty entity")
    if not view.source:
        violations.append("empty source")
    if not isinstance(view.ttl, (int, np.integer)) or view.ttl <= 0:
        violations.append("nonpositive ttl")
    if not view.features:
        violations.append("empty feature list")
    seen = set()
    for f in view.features:
        if f.name in seen:
            violations.append(f"duplicate feature {f.name!r}")
        seen.add(f.name)
        if f.name not in catalog:
            violations.append(f"unknown feature {f.name!r}")
    return violations


class TrainingMatrix:
    """Entity/timestamp rows by feature columns, with an explicit missing mask.

    ``data`` holds float64 values (category codes and booleans are cast);
    masked cells hold NaN but the mask is authoritative. Arrays are made
    read-only so instances can be shared between threads.
    """

    __slots__ = ("entity_name", "entities", "timestamps", "columns", "data", "mask", "target")

    def __init__(self, entities, timestamps, columns, data, mask=None, target=None,
                 entity_name="residential_id"):
        entities = np.asarray(entities, dtype=object)
        timestamps = np.asarray(timestamps, dtype=np.int64)
        columns = tuple(columns)
        data = np.asarray(data, dtype=np.float64).reshape(len(entities), len(columns))
        if mask is None:
            mask = np.isnan(data)
        mask = np.asarray(mask, dtype=bool)
        if timestamps.shape != entities.shape:
            raise ValueError("entities and timestamps differ in length")
        if mask.shape != data.shape:
            raise ValueError("mask shape differs from data shape")
        if len(set(columns)) != len(columns):
            raise ValueError("duplicate column names")
        if target is not None and target not in columns:
            raise ValueError(f"target {target!r} is not a column")
        data = np.where(mask, np.nan, data)
        for arr in (entities, timestamps, data, mask):
            arr.setflags(write=False)
        self.entity_name = entity_name
        self.entities = entities
        self.timestamps = timestamps
        self.columns = columns
        self.data = data
        self.mask = mask
        self.target = target

    def __len__(self):
        return len(self.entities)

    def __repr__(self):
        return f"TrainingMatrix(rows={len(self)}, columns={list(self.columns)})"

    @property
    def rows(self) -> list[tuple[EntityKey, int]]:
        return [(EntityKey(self.entity_name, str(e)), int(t))
                for e, t in zip(self.entities, self.timestamps)]

    def index(self, name: str) -> int:
        return self.columns.index(name)

    def column(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        j = self.index(name)
        return self.data[:, j], self.mask[:, j]

    def select(self, columns: Sequence[str]) -> TrainingMatrix:
        idx = [self.index(c) for c in columns]
        target = self.target if self.target in columns else None
        return TrainingMatrix(self.entities, self.timestamps, columns, self.data[:, idx],
                              self.mask[:, idx], target, self.entity_name)

    def take(self, rows) -> TrainingMatrix:
        rows = np.asarray(rows)
        return TrainingMatrix(self.entities[rows], self.timestamps[rows], self.columns,
                              self.data[rows], self.mask[rows], self.target, self.entity_name)

    def sorted(self) -> TrainingMatrix:
        """Canonical row order: by entity string, then timestamp."""
        order = np.lexsort((self.timestamps, self.entities.astype(str)))
        return self.take(order)

    def equals(self, other: TrainingMatrix) -> bool:
        return (self.columns == other.columns
                and np.array_equal(self.entities, other.entities)
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.mask, other.mask)
                and np.array_equal(self.data, other.data, equal_nan=True))

    def to_frame(self, missing_columns: bool = True) -> pd.DataFrame:
        frame = pd.DataFrame({"entity": self.entities.astype(str), "timestamp": self.timestamps})
        for j, name in enumerate(self.columns):
            frame[name] = self.data[:, j]
        if missing_columns:
            for j, name in enumerate(self.columns):
                frame[f"__missing__{name}"] = self.mask[:, j].astype(np.int8)
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, columns: Sequence[str],
                   entity_name: str = "residential_id", target=None) -> TrainingMatrix:
        """Inverse of :meth:`to_frame`: key columns ``entity`` and ``timestamp``."""
        data = np.column_stack([frame[c].to_numpy(dtype=np.float64, na_value=np.nan)
                                for c in columns]) if len(columns) else np.empty((len(frame), 0))
        return cls(frame["entity"].to_numpy(dtype=object), frame["timestamp"].to_numpy(),
                   columns, data, np.isnan(data), target, entity_name)


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    mae: float
    med_ae: float
    n_folds: int
    n_repeats: int
    seed: int

    def __post_init__(self):
        for name in ("mse", "mae", "med_ae"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be finite and nonnegative")
        if self.n_folds < 2:
            raise ValueError("n_folds must be at least 2")
