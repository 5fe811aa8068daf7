"""Feature engineering: rolling statistics, sun geometry, clock and calendar
features, building encodings, and the enrichment step that derives every
engineered column from cleaned tables."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from datetime import date
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .core import HEATING_COOLING_FLAGS
from .errors import InvalidLatitude
from .kernels import rolling_window_stats, solar_geometry

logger = logging.getLogger(__name__)

SOLAR_CONSTANT = 1361.0  # W/m^2
TRANSMITTANCE = 0.75
MAX_AIRMASS = 38.0
ROLLING_WINDOW = 10
DEFAULT_TZ = "America/Vancouver"

_EPOCH_DAY = np.datetime64("1970-01-01", "D")


@dataclass(frozen=True)
class SolarPosition:
    altitude: np.ndarray | float
    azimuth: np.ndarray | float
    clear_sky_radiation: np.ndarray | float


@dataclass(frozen=True)
class RollingStats:
    """Per-row trailing window statistics; NaN where ``complete`` is false."""

    mean: np.ndarray
    std: np.ndarray
    window: int
    complete: np.ndarray


def rolling_stats(timestamps, energy, window: int = ROLLING_WINDOW, groups=None) -> RollingStats:
    """Trailing-inclusive mean and population std of ``energy``.

    Rows with fewer than ``window`` trailing samples, or with a step longer
    than one hour inside the window, are incomplete. ``groups`` (optional)
    separates entities in a table sorted by (group, timestamp).
    """
    timestamps = np.asarray(timestamps, dtype=np.int64)
    if groups is None:
        groups = np.zeros(len(timestamps), dtype=np.int64)
    mean, std, complete = rolling_window_stats(groups, timestamps, energy, window, 3600)
    return RollingStats(mean, std, window, complete)


def clear_sky_radiation(altitude):
    """Transmittance clear-sky model: S0 * sin(alt) * tau**airmass, 0 below the horizon."""
    alt = np.asarray(altitude, dtype=np.float64)
    s = np.sin(np.radians(alt))
    with np.errstate(divide="ignore"):
        airmass = np.minimum(MAX_AIRMASS, np.where(s > 0, 1.0 / s, MAX_AIRMASS))
    rad = np.where(alt > 0, SOLAR_CONSTANT * s * TRANSMITTANCE ** airmass, 0.0)
    return rad if rad.ndim else float(rad)


def solar_position(latitude, longitude, t) -> SolarPosition:
    """Sun altitude/azimuth (deg) and clear-sky radiation (W/m^2) at UTC epoch ``t``.

    Accepts scalars or broadcastable arrays.
    """
    lat = np.asarray(latitude, dtype=np.float64)
    if np.any(np.abs(lat) > 90) or np.any(np.isnan(lat)):
        raise InvalidLatitude(f"latitude out of range: {latitude!r}")
    scalar = np.ndim(t) == 0 and lat.ndim == 0 and np.ndim(longitude) == 0
    t_arr, lat_arr, lon_arr = np.broadcast_arrays(np.atleast_1d(np.asarray(t, dtype=np.float64)),
                                                  np.atleast_1d(lat),
                                                  np.atleast_1d(np.asarray(longitude, dtype=np.float64)))
    alt, az = solar_geometry(t_arr, lat_arr, lon_arr)
    rad = clear_sky_radiation(alt)
    if scalar:
        return SolarPosition(float(alt[0]), float(az[0]), float(rad[0]))
    return SolarPosition(alt, az, rad)


def _local_seconds(t, tz_offset):
    t = np.asarray(t, dtype=np.int64)
    off = np.rint(np.asarray(tz_offset, dtype=np.float64) * 3600).astype(np.int64)
    return t + off


def time_features(t, tz_offset=0.0):
    """(day_percent, year_percent) in local time, both in [0, 1)."""
    local = _local_seconds(t, tz_offset)
    days = np.floor_divide(local, 86400)
    day_percent = (local - days * 86400) / 86400.0
    day64 = days.astype("timedelta64[D]") + _EPOCH_DAY
    year_start = day64.astype("datetime64[Y]")
    start_days = (year_start.astype("datetime64[D]") - _EPOCH_DAY).astype(np.int64)
    next_days = ((year_start + 1).astype("datetime64[D]") - _EPOCH_DAY).astype(np.int64)
    year_percent = (local - start_days * 86400) / ((next_days - start_days) * 86400.0)
    if np.ndim(day_percent) == 0:
        return float(day_percent), float(year_percent)
    return day_percent, year_percent


def _holiday_days(holidays) -> np.ndarray:
    if isinstance(holidays, np.ndarray) and holidays.dtype.kind == "i":
        return holidays
    days = [(np.datetime64(d, "D") - _EPOCH_DAY).astype(np.int64) for d in holidays]
    return np.array(sorted(days), dtype=np.int64)


def calendar_features(t, tz_offset, holidays):
    """(is_holiday, weekday with Monday=0, is_weekend) from the local date."""
    local = _local_seconds(t, tz_offset)
    days = np.floor_divide(local, 86400)
    weekday = (days + 3) % 7  # 1970-01-01 was a Thursday
    is_weekend = weekday >= 5
    is_holiday = np.isin(days, _holiday_days(holidays))
    if np.ndim(weekday) == 0:
        return bool(is_holiday), int(weekday), bool(is_weekend)
    return is_holiday, weekday, is_weekend


def load_holidays(path_or_region="bc") -> frozenset[date]:
    """Read a calendar file (one ISO date per line, ``#`` comments).

    A bare region name resolves to the calendar shipped with the package.
    """
    p = Path(str(path_or_region))
    if p.suffix == "" and not p.exists():
        text = resources.files("energy_fs").joinpath(f"data/holidays/{p.name.lower()}.txt").read_text(encoding="utf-8")
    else:
        text = p.read_text(encoding="utf-8")
    out = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.add(date.fromisoformat(line))
    return frozenset(out)


def tz_offsets(t, tz: str = DEFAULT_TZ) -> np.ndarray:
    """UTC offset in hours of zone ``tz`` at each epoch second in ``t``."""
    t = np.asarray(t, dtype=np.int64)
    if tz in ("UTC", "utc"):
        return np.zeros(len(t))
    utc = pd.DatetimeIndex(pd.to_datetime(t, unit="s", utc=True))
    local = utc.tz_convert(tz).tz_localize(None)
    return (local.asi8 - utc.tz_localize(None).asi8) / 3.6e12


class CategoryCodes:
    """Dense integer codes per column, assigned in first-seen order and persisted."""

    def __init__(self, mapping: dict[str, list[str]] | None = None):
        self.mapping = {k: list(v) for k, v in (mapping or {}).items()}

    def update(self, column: str, values) -> None:
        known = self.mapping.setdefault(column, [])
        seen = set(known)
        for v in pd.unique(pd.Series(values).dropna().astype(str)):
            if v not in seen:
                known.append(v)
                seen.add(v)

    def code(self, column: str, value) -> float:
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return math.nan
        try:
            return float(self.mapping[column].index(str(value)))
        except (KeyError, ValueError):
            return math.nan

    def encode(self, column: str, values) -> np.ndarray:
        cats = pd.Index(self.mapping.get(column, []), dtype=object)
        s = pd.Series(values, dtype=object)
        valid = s.notna().to_numpy()
        idx = cats.get_indexer(s.astype(str)).astype(np.float64)
        idx[(idx < 0) | ~valid] = math.nan
        return idx

    def to_json(self) -> str:
        return json.dumps(self.mapping, indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> CategoryCodes:
        p = Path(path)
        if not p.exists():
            return cls()
        return cls(json.loads(p.read_text(encoding="utf-8")))


def encode_building(row, codes: CategoryCodes) -> dict[str, float]:
    """Numeric feature map for one validated metadata row (mapping-like)."""
    out = {
        "residential_id": codes.code("residential_id", row["residential_id"]),
        "house_type": codes.code("house_type", row.get("house_type", "unknown")),
        "facing": codes.code("facing", row.get("facing", "unknown")),
        "region": codes.code("region", row["region"]),
    }
    for name in ("RUs", "latitude", "longitude"):
        v = row.get(name)
        out[name] = math.nan if v is None or pd.isna(v) else float(v)
    for flag in HEATING_COOLING_FLAGS:
        out[flag] = 1.0 if bool(row.get(flag, False)) else 0.0
    return out


def encode_building_frame(metadata: pd.DataFrame, codes: CategoryCodes) -> pd.DataFrame:
    """Vectorised :func:`encode_building` over a cleaned metadata table."""
    out = pd.DataFrame({"residential_id": metadata["residential_id"].to_numpy(dtype=object)})
    for col in ("residential_id", "house_type", "facing", "region"):
        out[f"{col}__code"] = codes.encode(col, metadata[col].to_numpy(dtype=object))
    for name in ("RUs", "latitude", "longitude"):
        out[name] = pd.to_numeric(metadata[name]).to_numpy(dtype=np.float64)
    for flag in HEATING_COOLING_FLAGS:
        out[flag] = metadata[flag].to_numpy(dtype=bool).astype(np.float64)
    return out


# name -> input it needs beyond (entity, timestamp, energy)
ROW_FEATURES = {
    "energy_mean": "series", "energy_std": "series",
    "solar_altitude": "location", "solar_azimuth": "location", "solar_radiation": "location",
    "day_percent": "clock", "year_percent": "clock",
    "is_holiday": "clock", "weekday": "clock", "is_weekend": "clock",
}


@dataclass(frozen=True)
class EnrichContext:
    """Everything the row-level producers need besides the rows themselves."""

    locations: pd.DataFrame  # residential_id, latitude, longitude
    holidays: np.ndarray  # sorted epoch-day numbers
    tz: str = DEFAULT_TZ


def make_context(metadata: pd.DataFrame, holidays, tz: str = DEFAULT_TZ) -> EnrichContext:
    loc = metadata[["residential_id", "latitude", "longitude"]].reset_index(drop=True)
    return EnrichContext(loc, _holiday_days(holidays), tz)


def enrich_rows(entities, timestamps, energy, names, context: EnrichContext) -> dict[str, np.ndarray]:
    """Compute the requested row-level features for rows sorted by (entity, timestamp).

    Values depend only on each entity's own series and the row timestamp, so
    enriching a subset of entities yields exactly the values the full table
    would give for those entities.
    """
    names = [n for n in names if n in ROW_FEATURES]
    out: dict[str, np.ndarray] = {}
    if not names:
        return out
    entities = np.asarray(entities, dtype=object)
    timestamps = np.asarray(timestamps, dtype=np.int64)
    n = len(timestamps)
    needs = {ROW_FEATURES[nm] for nm in names}
    if "series" in needs:
        groups = _group_codes(entities)
        stats = rolling_stats(timestamps, energy, ROLLING_WINDOW, groups)
        out["energy_mean"], out["energy_std"] = stats.mean, stats.std
    if "location" in needs:
        loc = context.locations.set_index("residential_id")
        lat = pd.Series(entities).map(loc["latitude"]).to_numpy(dtype=np.float64)
        lon = pd.Series(entities).map(loc["longitude"]).to_numpy(dtype=np.float64)
        known = ~(np.isnan(lat) | np.isnan(lon))
        alt = np.full(n, np.nan)
        az = np.full(n, np.nan)
        if known.any():
            pos = solar_position(lat[known], lon[known], timestamps[known].astype(np.float64))
            alt[known], az[known] = pos.altitude, pos.azimuth
        rad = np.where(known, clear_sky_radiation(np.where(known, alt, 0.0)), np.nan)
        out["solar_altitude"], out["solar_azimuth"], out["solar_radiation"] = alt, az, rad
    if "clock" in needs:
        offsets = tz_offsets(timestamps, context.tz)
        out["day_percent"], out["year_percent"] = time_features(timestamps, offsets)
        hol, wd, we = calendar_features(timestamps, offsets, context.holidays)
        out["is_holiday"] = hol.astype(np.float64)
        out["weekday"] = wd.astype(np.float64)
        out["is_weekend"] = we.astype(np.float64)
    return {nm: out[nm] for nm in names}


def _group_codes(entities: np.ndarray) -> np.ndarray:
    """Run-length group ids for a sorted entity column."""
    if len(entities) == 0:
        return np.zeros(0, dtype=np.int64)
    change = np.empty(len(entities), dtype=bool)
    change[0] = False
    change[1:] = entities[1:] != entities[:-1]
    return np.cumsum(change).astype(np.int64)
