"""Three feature-management strategies over the same offline store, and the
harness that times them.

* eager: one process joins consumption x metadata x weather with pandas,
  derives every feature, persists one wide intermediate file, then filters
  the subset from it.
* partitioned: the same join split by household across a worker pool, each
  worker writing its own part file; a barrier merges the parts.
* lazy: registration only at preparation time; the subset is joined on
  request through the registry.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import platform
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import pyarrow.dataset as ds
import pyarrow.parquet as pq

from ._io import atomic_write_csv, atomic_write_parquet, atomic_write_text
from .core import TrainingMatrix
from .features import ROW_FEATURES, encode_building_frame, enrich_rows
from .kernels import asof_indices
from .registry import REGISTRY_FILE, Registry, get_subset
from .store import OfflineStore

logger = logging.getLogger(__name__)

STRATEGIES = ("eager", "partitioned", "lazy")
WEATHER_TTL = 3600
STATIC_TTL = 2147483647

WEATHER_FEATURES = ("temperature", "humidity", "pressure", "weather")
BUILDING_FEATURES = ("residential_id", "house_type", "facing", "RUs", "SN", "FAGF", "FPG", "IFRHG",
                     "NAC", "FAC", "PAC", "BHE", "IFRHE", "WRHIR", "GEOTH", "latitude", "longitude",
                     "region")
DERIVED_FEATURES = tuple(ROW_FEATURES)
ALL_FEATURES = ("energy", "energy_mean", "energy_std", *WEATHER_FEATURES, "solar_altitude",
                "solar_azimuth", "solar_radiation", *BUILDING_FEATURES, "day_percent",
                "year_percent", "is_holiday", "weekday", "is_weekend")


@dataclass(frozen=True)
class SubsetQuery:
    entity_ids: tuple[str, ...]
    t0: int
    t1: int
    features: tuple[str, ...] = ALL_FEATURES

    def __post_init__(self):
        object.__setattr__(self, "entity_ids", tuple(str(e) for e in self.entity_ids))
        object.__setattr__(self, "features", tuple(self.features))

    @property
    def feature_names(self) -> list[str]:
        return [f.partition(":")[2] or f for f in self.features]


@dataclass
class BenchTimings:
    strategy: str
    t_process: float = 0.0
    t_join_enrich: float = 0.0
    t_obtain_subset: float = 0.0
    threads: int = 1
    rows_joined: int = 0


@dataclass
class BenchReport:
    runs: list[BenchTimings]
    environment: str
    repetitions: int
    aggregation: str = "median"
    # runs with rep index 0 are warm-up and excluded from medians
    rep_index: list[int] = field(default_factory=list)

    def medians(self) -> dict[str, BenchTimings]:
        out = {}
        for strategy in STRATEGIES:
            runs = [r for r, i in zip(self.runs, self.rep_index) if r.strategy == strategy and i > 0]
            if not runs:
                runs = [r for r in self.runs if r.strategy == strategy]
            if not runs:
                continue
            out[strategy] = BenchTimings(
                strategy,
                statistics.median(r.t_process for r in runs),
                statistics.median(r.t_join_enrich for r in runs),
                statistics.median(r.t_obtain_subset for r in runs),
                runs[0].threads,
                runs[0].rows_joined,
            )
        return out

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(t) for t in self.medians().values()])

    def runs_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([asdict(r) for r in self.runs])
        frame.insert(1, "rep", self.rep_index)
        return frame

    def render(self) -> str:
        labels = {"eager": "eager (single process)", "partitioned": "partitioned (worker pool)",
                  "lazy": "lazy (registry)"}
        lines = [f"{'implementation':<28}{'to process':>12}{'to join & enrich':>18}{'to obtain subset':>18}"]
        for name, t in self.medians().items():
            proc = f"{t.t_process:.3f} s" if name == "eager" else "-"
            lines.append(f"{labels[name]:<28}{proc:>12}{t.t_join_enrich:>16.3f} s{t.t_obtain_subset:>16.3f} s")
        lines.append(f"median of {max(self.repetitions - 1, 1)} runs after warm-up; {self.environment}")
        return "\n".join(lines) + "\n"


def environment_string() -> str:
    return (f"{platform.processor() or platform.machine()}, {os.cpu_count()} cpu, "
            f"{platform.system()} {platform.release()}, Python {platform.python_version()}")


def _load_tables(store: OfflineStore):
    store.check()
    cons = store.read("consumption")
    weather = store.read("weather")
    meta = store.read("metadata")
    return cons, weather, meta


def _ingest_elapsed(store: OfflineStore) -> float:
    p = store.root / "ingest_stats.json"
    if p.exists():
        return float(json.loads(p.read_text(encoding="utf-8")).get("total_elapsed", 0.0))
    return 0.0


def _finalize(frame: pd.DataFrame, codes) -> pd.DataFrame:
    """Order the joined columns and encode weather conditions."""
    frame["weather"] = codes.encode("weather", frame["weather"].to_numpy(dtype=object))
    out = frame[["entity", "timestamp", *ALL_FEATURES]].copy()
    for col in ALL_FEATURES:
        out[col] = out[col].astype(np.float64)
    return out


def _building_columns(meta: pd.DataFrame, codes) -> pd.DataFrame:
    enc = encode_building_frame(meta, codes)
    enc = enc.rename(columns={f"{c}__code": c for c in ("house_type", "facing", "region")})
    enc = enc.rename(columns={"residential_id__code": "residential_id_code"})
    enc["region_name"] = meta["region"].astype(str).to_numpy()
    enc["meta_ts"] = meta["timestamp"].to_numpy(dtype=np.int64)
    return enc


def eager_join_enrich(cons, weather, meta, codes, context) -> pd.DataFrame:
    """Whole-table left join with pandas, then feature derivation."""
    left = cons.rename(columns={"residential_id": "entity"})
    left = left.sort_values(["entity", "timestamp"], kind="mergesort").reset_index(drop=True)
    build = _building_columns(meta, codes).rename(columns={"residential_id": "entity"})
    joined = left.merge(build, on="entity", how="left", sort=False)
    static_ok = (joined["timestamp"] - joined["meta_ts"]) <= STATIC_TTL
    joined.loc[~static_ok.fillna(False).to_numpy(dtype=bool), list(BUILDING_FEATURES[1:]) + ["residential_id_code"]] = np.nan
    joined["residential_id"] = joined.pop("residential_id_code")
    joined["region_name"] = joined["region_name"].where(static_ok.to_numpy(dtype=bool), None).fillna("")
    joined["_row"] = np.arange(len(joined))

    right = weather.rename(columns={"region": "region_name", "timestamp": "wx_ts"}).sort_values(
        ["wx_ts", "region_name"], kind="mergesort")
    probe = joined.sort_values("timestamp", kind="mergesort")
    merged = pd.merge_asof(probe, right, left_on="timestamp", right_on="wx_ts", by="region_name",
                           direction="backward", tolerance=WEATHER_TTL, allow_exact_matches=True)
    merged = merged.sort_values("_row", kind="mergesort").reset_index(drop=True)

    derived = enrich_rows(merged["entity"].to_numpy(dtype=object), merged["timestamp"].to_numpy(),
                          merged["energy"].to_numpy(dtype=np.float64), DERIVED_FEATURES, context)
    for name, values in derived.items():
        merged[name] = values
    return _finalize(merged, codes)


def _partition_join_enrich(cons, weather, meta_enc, codes, context) -> pd.DataFrame:
    """Join for one household partition with the as-of kernel."""
    ents = cons["residential_id"].to_numpy(dtype=object)
    ts = cons["timestamp"].to_numpy(dtype=np.int64)
    frame = pd.DataFrame({"entity": ents, "timestamp": ts,
                          "energy": cons["energy"].to_numpy(dtype=np.float64)})
    pos = pd.Index(meta_enc["residential_id"]).get_indexer(ents)
    has_meta = pos >= 0
    static_ok = has_meta & (ts - meta_enc["meta_ts"].to_numpy()[np.maximum(pos, 0)] <= STATIC_TTL)
    take = np.maximum(pos, 0)
    for name in BUILDING_FEATURES:
        src = "residential_id_code" if name == "residential_id" else name
        vals = meta_enc[src].to_numpy(dtype=np.float64)
        frame[name] = np.where(static_ok, vals[take] if len(vals) else np.nan, np.nan)
    region = np.where(static_ok, meta_enc["region_name"].to_numpy(dtype=object)[take]
                      if len(meta_enc) else "", "")

    wx_region = weather["region"].to_numpy(dtype=object)
    codes_all, _ = pd.factorize(np.concatenate([wx_region, region.astype(object)]), sort=True)
    wx_codes = codes_all[:len(wx_region)]
    q_codes = codes_all[len(wx_region):]
    wx_ts = weather["timestamp"].to_numpy(dtype=np.int64)
    idx = asof_indices(wx_codes, wx_ts, q_codes, ts, WEATHER_TTL)
    hit = (idx >= 0) & (region != "")
    sel = np.where(hit, idx, 0)
    for name in WEATHER_FEATURES:
        vals = weather[name].to_numpy(dtype=object if name == "weather" else np.float64)
        if name == "weather":
            col = np.full(len(ts), None, dtype=object)
            col[hit] = vals[sel[hit]]
        else:
            col = np.full(len(ts), np.nan)
            col[hit] = vals[sel[hit]]
        frame[name] = col

    derived = enrich_rows(ents, ts, frame["energy"].to_numpy(), DERIVED_FEATURES, context)
    for name, values in derived.items():
        frame[name] = values
    return _finalize(frame, codes)


def _matrix_from_intermediate(frame: pd.DataFrame, query: SubsetQuery) -> TrainingMatrix:
    rank = {e: i for i, e in enumerate(dict.fromkeys(query.entity_ids))}
    ents = frame["entity"].astype(str).to_numpy(dtype=object)
    order = np.lexsort((frame["timestamp"].to_numpy(), np.array([rank[e] for e in ents], dtype=np.int64)))
    frame = frame.iloc[order]
    cols = query.feature_names
    data = frame[cols].to_numpy(dtype=np.float64) if len(frame) else np.empty((0, len(cols)))
    return TrainingMatrix(frame["entity"].to_numpy(dtype=object), frame["timestamp"].to_numpy(),
                          cols, data, np.isnan(data))


def _subset_filter(query: SubsetQuery):
    return ((ds.field("entity").isin(list(query.entity_ids)))
            & (ds.field("timestamp") >= query.t0) & (ds.field("timestamp") <= query.t1))


def _work_dir(store: OfflineStore, work_dir, name) -> Path:
    base = Path(work_dir) if work_dir is not None else store.root / "_work"
    path = base / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def run_eager(store_dir, query: SubsetQuery, work_dir=None):
    """Join and enrich everything into one intermediate file, then filter."""
    store = OfflineStore(store_dir)
    timings = BenchTimings("eager", t_process=_ingest_elapsed(store), threads=1)
    start = time.perf_counter()
    cons, weather, meta = _load_tables(store)
    codes = store.categories()
    context = store.context(meta)
    joined = eager_join_enrich(cons, weather, meta, codes, context)
    out = _work_dir(store, work_dir, "eager") / "intermediate.parquet"
    atomic_write_parquet(out, joined)
    timings.t_join_enrich = time.perf_counter() - start
    timings.rows_joined = len(joined)
    del joined

    start = time.perf_counter()
    columns = ["entity", "timestamp", *query.feature_names]
    subset = pq.read_table(out, columns=columns, filters=_subset_filter(query)).to_pandas()
    matrix = _matrix_from_intermediate(subset, query)
    timings.t_obtain_subset = time.perf_counter() - start
    return matrix, timings


def run_partitioned(store_dir, query: SubsetQuery, threads: int = 4, work_dir=None):
    """Household-partitioned join on a thread pool with a final merge barrier."""
    if threads < 2:
        raise ValueError("partitioned strategy needs threads >= 2")
    store = OfflineStore(store_dir)
    timings = BenchTimings("partitioned", threads=threads)
    start = time.perf_counter()
    store.check()
    part_dir = _work_dir(store, work_dir, "partitioned")
    for old in part_dir.glob("part-*.parquet"):
        old.unlink()
    meta = store.read("metadata")
    codes = store.categories()
    context = store.context(meta)
    meta_enc = _building_columns(meta, codes)
    households = sorted(pq.read_table(store.path("consumption"), columns=["residential_id"])
                        .column(0).unique().to_pylist())
    n_parts = min(len(households), threads * 2) or 1
    groups = [households[i::n_parts] for i in range(n_parts)]

    def work(i):
        ids = groups[i]
        cons = store.read("consumption", key="residential_id", values=ids)
        regions = set(meta.loc[meta["residential_id"].isin(ids), "region"].astype(str))
        wx = store.read("weather", key="region", values=regions) if regions else store.read("weather").iloc[:0]
        wx = wx.iloc[np.lexsort((wx["timestamp"].to_numpy(), wx["region"].astype(str).to_numpy()))]
        cons = cons.iloc[np.lexsort((cons["timestamp"].to_numpy(),
                                     cons["residential_id"].astype(str).to_numpy()))]
        part = _partition_join_enrich(cons.reset_index(drop=True), wx.reset_index(drop=True),
                                      meta_enc, codes, context)
        atomic_write_parquet(part_dir / f"part-{i:05d}.parquet", part)
        return len(part)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        counts = list(pool.map(work, range(n_parts)))
    timings.t_join_enrich = time.perf_counter() - start
    timings.rows_joined = sum(counts)

    start = time.perf_counter()
    dataset = ds.dataset(sorted(part_dir.glob("part-*.parquet")), format="parquet")
    columns = ["entity", "timestamp", *query.feature_names]
    subset = dataset.to_table(columns=columns, filter=_subset_filter(query)).to_pandas()
    matrix = _matrix_from_intermediate(subset, query)
    timings.t_obtain_subset = time.perf_counter() - start
    return matrix, timings


def run_lazy(store_dir, registry_file, query: SubsetQuery):
    """Register views (metadata only), then join the subset on request."""
    store = OfflineStore(store_dir)
    store.check()
    timings = BenchTimings("lazy", threads=1)
    start = time.perf_counter()
    registry = Registry.load(registry_file, store)
    timings.t_join_enrich = time.perf_counter() - start

    start = time.perf_counter()
    matrix = get_subset(registry, query.entity_ids, query.t0, query.t1, query.features)
    timings.t_obtain_subset = time.perf_counter() - start
    timings.rows_joined = len(matrix)
    return matrix, timings


@dataclass
class BenchConfig:
    store: Path
    registry: Path | None
    query: SubsetQuery
    repetitions: int = 3
    threads: int = 4
    work_dir: Path | None = None


def run_benchmark(config: BenchConfig) -> BenchReport:
    """Run each strategy ``repetitions`` times; the first run of each is warm-up."""
    if config.repetitions < 3:
        raise ValueError("repetitions must be >= 3")
    registry = config.registry or Path(config.store) / REGISTRY_FILE
    runs, reps = [], []
    for rep in range(config.repetitions):
        for strategy in STRATEGIES:
            if strategy == "eager":
                _, t = run_eager(config.store, config.query, config.work_dir)
            elif strategy == "partitioned":
                _, t = run_partitioned(config.store, config.query, config.threads, config.work_dir)
            else:
                _, t = run_lazy(config.store, registry, config.query)
            runs.append(t)
            reps.append(rep)
            logger.info("rep %d %s: join&enrich %.3fs subset %.3fs", rep, strategy,
                        t.t_join_enrich, t.t_obtain_subset)
    return BenchReport(runs, environment_string(), config.repetitions, rep_index=reps)


def write_report(report: BenchReport, out, prov=None) -> Path:
    out = Path(out)
    atomic_write_csv(out, report.to_frame(), prov, float_format="%.6f")
    atomic_write_csv(out.with_name(out.stem + "_runs.csv"), report.runs_frame(), prov, float_format="%.6f")
    atomic_write_text(out.with_suffix(".txt"), report.render())
    return out


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
