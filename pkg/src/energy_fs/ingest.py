"""Ingestion: read raw consumption, weather and metadata CSVs, clean them and
write sorted Parquet tables (plus CSV mirrors) into an offline store."""
from __future__ import annotations

import glob
import json
import logging
import re
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from ._io import atomic_write_csv, atomic_write_parquet, atomic_write_text
from .core import HEATING_COOLING_FLAGS
from .errors import DuplicateEntity, EmptyInput, MissingColumn
from .features import DEFAULT_TZ, CategoryCodes
from .store import CATEGORIES_FILE, SETTINGS_FILE

logger = logging.getLogger(__name__)

# canonical name -> accepted raw header spellings (compared case-insensitively)
DEFAULT_ALIASES = {
    "residential_id": ("residential_id", "house_id", "house", "household_id"),
    "date": ("date", "day"),
    "hour": ("hour", "hr"),
    "energy": ("energy", "energy_kwh", "kwh", "consumption"),
    "timestamp": ("timestamp", "datetime", "date_time", "time"),
    "region": ("station_region", "region", "station"),
    "temperature": ("temperature", "temp"),
    "humidity": ("humidity", "relative_humidity"),
    "pressure": ("pressure", "pressure_kpa"),
    "weather": ("weather", "weather_condition", "condition"),
    "house_type": ("house_type", "type"),
    "facing": ("facing", "orientation"),
    "RUs": ("rus", "rental_units"),
    "latitude": ("latitude", "lat"),
    "longitude": ("longitude", "lon", "lng"),
    **{flag: (flag.lower(),) for flag in HEATING_COOLING_FLAGS},
}

_TZ_SUFFIX = re.compile(r"(?:Z|[+-]\d\d:?\d\d)$")
_TRUE = {"1", "true", "t", "yes", "y"}


@dataclass
class StorageStats:
    rows_in: int = 0
    rows_out: int = 0
    rows_dropped_duplicate: int = 0
    rows_dropped_invalid: int = 0
    gap_hours_filled: int = 0
    elapsed: float = 0.0

    def check(self):
        assert self.rows_in == self.rows_out + self.rows_dropped_duplicate + self.rows_dropped_invalid


def _canonicalize(frame: pd.DataFrame, aliases) -> pd.DataFrame:
    lookup = {}
    for canon, spellings in {**DEFAULT_ALIASES, **(aliases or {})}.items():
        for s in (canon, *spellings):
            lookup.setdefault(s.lower(), canon)
    renamed = {}
    for col in frame.columns:
        canon = lookup.get(str(col).strip().lower())
        if canon is not None and canon not in renamed.values():
            renamed[col] = canon
    return frame.rename(columns=renamed)


def _require(frame, columns, source):
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise MissingColumn(f"{source}: header lacks {missing}")


def _read_csvs(paths) -> list[tuple[Path, pd.DataFrame]]:
    if isinstance(paths, (str, Path)):
        paths = [paths]
    files = []
    for p in paths:
        matched = sorted(glob.glob(str(p)))
        files.extend(matched if matched else [str(p)])
    out = []
    for f in files:
        frame = pd.read_csv(f, dtype=str, keep_default_na=False, comment="#", skipinitialspace=True)
        out.append((Path(f), frame))
    return out


def _strip(series: pd.Series) -> pd.Series:
    return series.fillna("").astype(str).str.strip()


def _numeric(series: pd.Series):
    """(values, empty, bad): empty cells become NaN; non-empty unparseable cells are bad."""
    s = _strip(series)
    values = pd.to_numeric(s, errors="coerce")
    empty = s.eq("").to_numpy()
    bad = values.isna().to_numpy() & ~empty
    return values.to_numpy(dtype=np.float64), empty, bad


def _localize(naive: pd.Series, tz: str) -> pd.Series:
    if tz in ("UTC", "utc"):
        return naive.dt.tz_localize("UTC")
    # repeated local hour: first occurrence (DST side); skipped hour: invalid
    ambiguous = np.ones(len(naive), dtype=bool)
    return naive.dt.tz_localize(tz, ambiguous=ambiguous, nonexistent="NaT").dt.tz_convert("UTC")


def parse_timestamps(series: pd.Series, tz: str = DEFAULT_TZ) -> np.ndarray:
    """ISO-8601 strings to UTC epoch seconds; values with an offset are taken
    as absolute, naive values as local time in ``tz``. Unparseable -> NaT."""
    s = _strip(series)
    aware = s.str.contains(_TZ_SUFFIX)
    out = pd.Series(pd.NaT, index=s.index, dtype="datetime64[ns, UTC]")
    if aware.any():
        out[aware] = pd.to_datetime(s[aware], format="ISO8601", utc=True, errors="coerce")
    naive = ~aware & s.ne("")
    if naive.any():
        parsed = pd.to_datetime(s[naive], format="ISO8601", errors="coerce")
        out[naive] = _localize(parsed, tz)
    return _epoch(out)


def _epoch(dt: pd.Series) -> np.ndarray:
    """UTC datetimes to float epoch seconds with NaN for NaT."""
    ns = dt.dt.tz_convert("UTC").dt.tz_localize(None).astype("datetime64[ns]")
    out = (ns.to_numpy().astype("datetime64[s]").astype(np.int64)).astype(np.float64)
    out[ns.isna().to_numpy()] = np.nan
    return out


def _date_hour(date_col: pd.Series, hour_col: pd.Series, tz: str):
    hours, _, _ = _numeric(hour_col)
    ok_hour = ~np.isnan(hours) & (hours >= 0) & (hours <= 23) & (hours == np.floor(hours))
    dates = pd.to_datetime(_strip(date_col), format="ISO8601", errors="coerce")
    local = dates + pd.to_timedelta(np.where(ok_hour, hours, 0), unit="h")
    local = local.where(ok_hour & dates.notna().to_numpy())
    # date strings with a time part are not plain calendar dates
    local = local.where(dates.dt.normalize().eq(dates))
    return _epoch(_localize(local, tz))


def _finish(frame, keys, invalid, stats: StorageStats):
    stats.rows_dropped_invalid = int(invalid.sum())
    frame = frame.loc[~invalid]
    dup = frame.duplicated(subset=keys, keep="first")
    stats.rows_dropped_duplicate = int(dup.sum())
    frame = frame.loc[~dup].sort_values(keys, kind="mergesort").reset_index(drop=True)
    stats.rows_out = len(frame)
    return frame


def _write(frame: pd.DataFrame, out_dir, name: str, prov=None) -> Path:
    out_dir = Path(out_dir)
    path = atomic_write_parquet(out_dir / f"{name}.parquet", frame, prov)
    mirror = frame.copy()
    if "timestamp" in mirror and name != "metadata":
        mirror["timestamp"] = pd.to_datetime(mirror["timestamp"], unit="s").dt.strftime("%Y-%m-%dT%H:%M:%SZ")
    atomic_write_csv(out_dir / f"{name}.csv", mirror, prov, float_format="%.17g")
    return path


def _update_categories(out_dir, frame: pd.DataFrame, columns) -> None:
    path = Path(out_dir) / CATEGORIES_FILE
    codes = CategoryCodes.load(path)
    for col in columns:
        codes.update(col, frame[col])
    atomic_write_text(path, codes.to_json())


def write_settings(out_dir, tz: str = DEFAULT_TZ, holidays: str = "bc") -> None:
    atomic_write_text(Path(out_dir) / SETTINGS_FILE,
                      json.dumps({"tz": tz, "holidays": holidays}, indent=2, sort_keys=True) + "\n")


def ingest_consumption(paths, out_dir, tz: str = DEFAULT_TZ, aliases=None, prov=None):
    """Clean hourly consumption files into ``consumption.parquet``.

    Each input needs ``date`` + ``hour`` (local) or ``timestamp`` columns and
    an ``energy`` column; ``residential_id`` falls back to the file stem.
    """
    t0 = time.perf_counter()
    parts = []
    for path, raw in _read_csvs(paths):
        raw = _canonicalize(raw, aliases)
        if "residential_id" not in raw.columns:
            raw["residential_id"] = path.stem
        if "timestamp" in raw.columns:
            _require(raw, ["energy"], path)
            ts = parse_timestamps(raw["timestamp"], tz)
        else:
            _require(raw, ["date", "hour", "energy"], path)
            ts = _date_hour(raw["date"], raw["hour"], tz)
        energy, empty, bad = _numeric(raw["energy"])
        rid = _strip(raw["residential_id"]).to_numpy(dtype=object)
        parts.append(pd.DataFrame({"residential_id": rid, "timestamp": ts, "energy": energy,
                                   "_bad": bad | empty | (energy < 0)}))
    frame = pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(
        columns=["residential_id", "timestamp", "energy", "_bad"])
    stats = StorageStats(rows_in=len(frame))
    invalid = (frame["_bad"].to_numpy(dtype=bool) | np.isnan(frame["timestamp"].to_numpy(dtype=float))
               | (frame["residential_id"] == "").to_numpy())
    frame = _finish(frame.drop(columns="_bad"), ["residential_id", "timestamp"], invalid, stats)
    if stats.rows_out == 0:
        raise EmptyInput("consumption input has no valid rows")
    frame["timestamp"] = frame["timestamp"].astype(np.int64)
    frame["residential_id"] = frame["residential_id"].astype(str)
    path = _write(frame, out_dir, "consumption", prov)
    stats.elapsed = time.perf_counter() - t0
    stats.check()
    return path, stats


def ingest_weather(path, out_dir, tz: str = DEFAULT_TZ, aliases=None, prov=None):
    """Clean the weather station file into ``weather.parquet``.

    Empty numeric cells stay missing; unparseable ones, or humidity outside
    [0, 100], invalidate the row. Conditions are lowercased and trimmed.
    """
    t0 = time.perf_counter()
    frames = _read_csvs(path)
    parts = []
    for p, raw in frames:
        raw = _canonicalize(raw, aliases)
        _require(raw, ["region", "timestamp", "temperature", "humidity", "pressure", "weather"], p)
        ts = parse_timestamps(raw["timestamp"], tz)
        temp, _, bad_t = _numeric(raw["temperature"])
        hum, _, bad_h = _numeric(raw["humidity"])
        pres, _, bad_p = _numeric(raw["pressure"])
        cond = _strip(raw["weather"]).str.lower()
        region = _strip(raw["region"])
        bad = bad_t | bad_h | bad_p | ((hum < 0) | (hum > 100)) | region.eq("").to_numpy()
        parts.append(pd.DataFrame({
            "region": region.to_numpy(dtype=object), "timestamp": ts, "temperature": temp,
            "humidity": hum, "pressure": pres,
            "weather": cond.where(cond.ne(""), None).to_numpy(dtype=object), "_bad": bad}))
    frame = pd.concat(parts, ignore_index=True)
    stats = StorageStats(rows_in=len(frame))
    invalid = frame["_bad"].to_numpy(dtype=bool) | np.isnan(frame["timestamp"].to_numpy(dtype=float))
    frame = _finish(frame.drop(columns="_bad"), ["region", "timestamp"], invalid, stats)
    if stats.rows_out == 0:
        raise EmptyInput("weather input has no valid rows")
    frame["timestamp"] = frame["timestamp"].astype(np.int64)
    frame["region"] = frame["region"].astype(str)
    path_out = _write(frame, out_dir, "weather", prov)
    _update_categories(out_dir, frame, ["weather"])
    stats.elapsed = time.perf_counter() - t0
    stats.check()
    return path_out, stats


def ingest_metadata(path, out_dir, aliases=None, prov=None):
    """Clean household metadata into ``metadata.parquet`` (one row per id).

    Unknown heating/cooling flags become false; missing facing/house_type
    become ``"unknown"``. Rows carry ``timestamp = 0`` so the static table can
    be served through the same as-of join as the time series.
    """
    t0 = time.perf_counter()
    (p, raw), *rest = _read_csvs(path)
    if rest:
        raw = pd.concat([raw] + [r for _, r in rest], ignore_index=True)
    raw = _canonicalize(raw, aliases)
    _require(raw, ["residential_id", "region", "latitude", "longitude"], p)
    stats = StorageStats(rows_in=len(raw))
    rid = _strip(raw["residential_id"])
    dup = rid[rid.ne("")].duplicated(keep=False)
    if dup.any():
        raise DuplicateEntity(f"metadata has several rows for {sorted(set(rid[rid.ne('')][dup]))}")
    lat, _, bad_lat = _numeric(raw["latitude"])
    lon, _, bad_lon = _numeric(raw["longitude"])
    rus, _, bad_rus = _numeric(raw["RUs"]) if "RUs" in raw else (np.full(len(raw), np.nan),) + (None,) * 2
    frame = pd.DataFrame({"residential_id": rid.to_numpy(dtype=object), "timestamp": 0})
    for col in ("house_type", "facing"):
        vals = _strip(raw[col]) if col in raw else pd.Series([""] * len(raw))
        frame[col] = vals.where(vals.ne(""), "unknown").to_numpy(dtype=object)
    frame["RUs"] = rus
    frame["region"] = _strip(raw["region"]).to_numpy(dtype=object)
    frame["latitude"] = lat
    frame["longitude"] = lon
    for flag in HEATING_COOLING_FLAGS:
        vals = _strip(raw[flag]).str.lower() if flag in raw else pd.Series([""] * len(raw))
        frame[flag] = vals.isin(_TRUE).to_numpy()
    invalid = (rid.eq("").to_numpy() | np.isnan(lat) | np.isnan(lon) | (np.abs(lat) > 90)
               | (np.abs(lon) > 180) | frame["region"].eq("").to_numpy()
               | (bad_rus if bad_rus is not None else False) | bad_lat | bad_lon
               | (rus < 0))
    frame = _finish(frame, ["residential_id"], np.asarray(invalid, dtype=bool), stats)
    if stats.rows_out == 0:
        raise EmptyInput("metadata input has no valid rows")
    path_out = _write(frame, out_dir, "metadata", prov)
    _update_categories(out_dir, frame, ["residential_id", "house_type", "facing", "region"])
    stats.elapsed = time.perf_counter() - t0
    stats.check()
    return path_out, stats


def ingest_all(consumption, weather, metadata, out_dir, tz=DEFAULT_TZ, holidays="bc",
               aliases=None, prov=None) -> dict[str, StorageStats]:
    """Run the three ingest steps and record their stats in ``ingest_stats.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / CATEGORIES_FILE).unlink(missing_ok=True)
    stats = {
        "metadata": ingest_metadata(metadata, out_dir, aliases, prov)[1],
        "consumption": ingest_consumption(consumption, out_dir, tz, aliases, prov)[1],
        "weather": ingest_weather(weather, out_dir, tz, aliases, prov)[1],
    }
    write_settings(out_dir, tz, holidays)
    total = sum(s.elapsed for s in stats.values())
    record = {name: asdict(s) for name, s in stats.items()}
    record["total_elapsed"] = total
    atomic_write_text(out_dir / "ingest_stats.json", json.dumps(record, indent=2) + "\n")
    for name, s in stats.items():
        logger.info("%s: %d in, %d out, %d dup, %d invalid", name, s.rows_in, s.rows_out,
                    s.rows_dropped_duplicate, s.rows_dropped_invalid)
    return stats
