"""Offline store: the directory of cleaned Parquet tables written by ingestion."""
from __future__ import annotations

import json
import threading
from pathlib import Path

import numpy as np
import pandas as pd
import pyarrow.parquet as pq

from .errors import StoreMissing
from .features import DEFAULT_TZ, CategoryCodes, EnrichContext, load_holidays, make_context

TABLES = ("consumption", "weather", "metadata")
CATEGORIES_FILE = "categories.json"
SETTINGS_FILE = "store.json"


class OfflineStore:
    """Read access to a store directory.

    ``reads`` counts every time a source data file is opened; the registry
    uses it to prove that registration is metadata-only.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.reads = 0
        self._lock = threading.Lock()

    def path(self, table: str) -> Path:
        return self.root / f"{table}.parquet"

    def check(self, tables=TABLES) -> None:
        if not self.root.is_dir():
            raise StoreMissing(f"store directory {self.root} does not exist")
        missing = [t for t in tables if not self.path(t).exists()]
        if missing:
            raise StoreMissing(f"store {self.root} lacks tables {missing}")

    def read_file(self, path, columns=None, key=None, values=None) -> pd.DataFrame:
        """Read a Parquet file, optionally keeping rows whose ``key`` is in ``values``."""
        path = Path(path)
        if not path.exists():
            raise StoreMissing(f"source file {path} does not exist")
        with self._lock:
            self.reads += 1
        filters = None
        if key is not None and values is not None:
            filters = [(key, "in", sorted({str(v) for v in values}))]
            if not filters[0][2]:
                return pq.read_table(path, columns=columns).schema.empty_table().to_pandas()
        return pq.read_table(path, columns=columns, filters=filters).to_pandas()

    def read(self, table: str, columns=None, key=None, values=None) -> pd.DataFrame:
        return self.read_file(self.path(table), columns, key, values)

    def settings(self) -> dict:
        p = self.root / SETTINGS_FILE
        base = {"tz": DEFAULT_TZ, "holidays": "bc"}
        if p.exists():
            base.update(json.loads(p.read_text(encoding="utf-8")))
        return base

    def categories(self) -> CategoryCodes:
        return CategoryCodes.load(self.root / CATEGORIES_FILE)

    def context(self, metadata: pd.DataFrame | None = None) -> EnrichContext:
        s = self.settings()
        if metadata is None:
            metadata = self.read("metadata", columns=["residential_id", "latitude", "longitude"])
        holidays = s["holidays"]
        hp = Path(holidays)
        if not hp.is_absolute() and (self.root / hp).exists():
            holidays = self.root / hp
        return make_context(metadata, load_holidays(holidays), s["tz"])

    def time_bounds(self, table="consumption") -> tuple[int, int]:
        ts = self.read(table, columns=["timestamp"])["timestamp"].to_numpy(dtype=np.int64)
        return int(ts.min()), int(ts.max())
