"""Deterministic synthetic stand-in for the household corpus.

Writes three raw CSVs shaped like the real inputs: hourly consumption with
local ``date``/``hour`` columns, hourly station weather with local
timestamps, and one metadata row per household. Consumption is built so
that every feature category carries signal: a slow occupancy level
(statistical), clock-time daily peaks (time), a heating/cooling response to
temperature that depends on the heating system (weather x building), a
daylight term (solar), and weekend/holiday shifts (sociological).
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from ._io import atomic_write_csv
from .core import HEATING_COOLING_FLAGS
from .features import DEFAULT_TZ, clear_sky_radiation, load_holidays
from .kernels import solar_geometry

# station code -> (latitude, longitude, mean temperature, seasonal amplitude)
STATIONS = {
    "YVR": (49.19, -123.18, 10.5, 7.0),
    "YYJ": (48.65, -123.43, 10.0, 6.0),
    "YKA": (50.70, -120.44, 8.5, 12.0),
}
HOUSE_TYPES = ("apartment", "duplex", "bungalow", "modern", "character", "special")
FACINGS = ("N", "S", "E", "W", "NE", "NW", "SE", "SW")
HEATING = ("FAGF", "BHE", "IFRHE", "IFRHG", "WRHIR", "GEOTH")
CONDITIONS = ("clear", "cloudy", "rain", "fog", "snow")


def _ar1(rng, n, phi, sd, size=()):
    shocks = rng.normal(0.0, sd, size=size + (n,))
    out = np.empty_like(shocks)
    out[..., 0] = shocks[..., 0] / np.sqrt(1 - phi ** 2)
    for i in range(1, n):
        out[..., i] = phi * out[..., i - 1] + shocks[..., i]
    return out


def _metadata(rng, n_households):
    rows = []
    codes = list(STATIONS)
    for h in range(n_households):
        region = codes[h % len(codes)]
        lat, lon = STATIONS[region][:2]
        heating = HEATING[rng.integers(len(HEATING))]
        cooling = ("NAC", "FAC", "PAC")[rng.choice(3, p=[0.6, 0.25, 0.15])]
        row = {
            "residential_id": f"house{h + 1}",
            "house_type": HOUSE_TYPES[rng.integers(len(HOUSE_TYPES))],
            "facing": FACINGS[rng.integers(len(FACINGS))] if rng.random() > 0.1 else "",
            "RUs": int(rng.choice(3, p=[0.6, 0.3, 0.1])),
            "region": region,
            "latitude": round(lat + rng.uniform(-0.05, 0.05), 4),
            "longitude": round(lon + rng.uniform(-0.05, 0.05), 4),
        }
        for flag in HEATING_COOLING_FLAGS:
            row[flag] = 0
        row[heating] = 1
        row[cooling] = 1
        row["FPG"] = int(row["FPG"] or rng.random() < 0.2)
        row["SN"] = int(rng.random() < 0.05)
        rows.append(row)
    return pd.DataFrame(rows)


def _local_grid(start, n_days, tz):
    local = pd.date_range(start, periods=n_days * 24, freq="h")
    utc = local.tz_localize(tz, ambiguous=np.ones(len(local), dtype=bool), nonexistent="shift_forward")
    epoch = utc.tz_convert("UTC").tz_localize(None).to_numpy().astype("datetime64[s]").astype(np.int64)
    return local, epoch


def _weather(rng, local, epoch, regions):
    n = len(local)
    doy = local.dayofyear.to_numpy()
    hour = local.hour.to_numpy()
    rows = {}
    for region in regions:
        lat, lon, mean, amp = STATIONS[region]
        seasonal = mean - amp * np.cos(2 * np.pi * (doy - 20) / 365.25)
        diurnal = -3.0 * np.cos(2 * np.pi * (hour - 3) / 24)
        temp = seasonal + diurnal + _ar1(rng, n, 0.995, 0.35)
        hum = np.clip(78 - 1.6 * (temp - mean) + _ar1(rng, n, 0.97, 1.5), 8, 100)
        pres = 101.3 + _ar1(rng, n, 0.99, 0.08)
        cond = np.empty(n, dtype=object)
        state = 0
        switch = rng.random(n)
        pick = rng.random(n)
        for i in range(n):
            if switch[i] < 0.06:
                state = int(pick[i] * 4)
            c = CONDITIONS[state]
            if c == "rain" and temp[i] < 0.5:
                c = "snow"
            cond[i] = c
        rows[region] = (temp, hum, pres, cond)
    return rows


def generate_synthetic(n_households: int, n_days: int, seed: int, out_dir,
                       start: str = "2018-01-01", tz: str = DEFAULT_TZ, holidays="bc"):
    """Write ``consumption.csv``, ``weather.csv`` and ``metadata.csv`` to ``out_dir``.

    Output bytes depend only on the arguments. Local wall-clock times are
    written for every hour of every day, so the nonexistent spring-forward
    hour appears in the raw files and is rejected at ingestion.
    """
    if n_households < 1:
        raise ValueError("n_households must be >= 1")
    if n_days < 2:
        raise ValueError("n_days must be >= 2")
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    meta = _metadata(rng, n_households)
    local, epoch = _local_grid(start, n_days, tz)
    n = len(local)
    regions = sorted(set(meta["region"]))
    weather = _weather(rng, local, epoch, regions)

    hour = local.hour.to_numpy() + local.minute.to_numpy() / 60.0
    hol = load_holidays(holidays)
    days = local.normalize()
    off_day = (local.dayofweek.to_numpy() >= 5) | np.isin(days.date, list(hol))
    ht_effect = dict(zip(HOUSE_TYPES, (-0.15, 0.0, 0.1, 0.05, 0.15, 0.25)))

    energy = np.empty((n_households, n))
    for h, row in meta.iterrows():
        temp, hum, pres, cond = weather[row["region"]]
        alt, _ = solar_geometry(epoch.astype(np.float64), row["latitude"], row["longitude"])
        rad = clear_sky_radiation(alt)
        base = 0.45 + 0.25 * row["RUs"] + ht_effect[row["house_type"]]
        morning = np.where(off_day, 0.35 * np.exp(-((hour - 9.5) / 2.0) ** 2),
                           0.45 * np.exp(-((hour - 7.0) / 1.2) ** 2))
        evening = 0.8 * np.exp(-((hour - 19.0) / 2.0) ** 2)
        midday = np.where(off_day, 0.3 * np.exp(-((hour - 13.5) / 3.0) ** 2), 0.0)
        night = np.where((hour < 5.5), -0.15, 0.0)
        electric = bool(row["BHE"] or row["IFRHE"])
        heat_coef = 0.10 if electric else (0.035 if row["GEOTH"] else 0.012)
        heating = heat_coef * np.maximum(0.0, 16.0 - temp)
        cool_coef = 0.12 if row["FAC"] else (0.07 if row["PAC"] else 0.0)
        cooling = cool_coef * np.maximum(0.0, temp - 21.0)
        indoor = np.where(np.isin(cond, ("rain", "snow")), 0.12, 0.0)
        daylight = -0.25 * rad / 1000.0
        dry = 0.004 * (hum - 75.0)
        level = 0.25 * _ar1(rng, n, 0.985, 0.12)
        noise = rng.normal(0.0, 0.12 + 0.05 * row["RUs"], n)
        e = base + morning + evening + midday + night + heating + cooling + indoor + daylight + dry
        energy[h] = np.maximum(0.02, e * (1.0 + level) + noise)

    date_str = local.strftime("%Y-%m-%d").to_numpy()
    hours = local.hour.to_numpy()
    consumption = pd.DataFrame({
        "residential_id": np.repeat(meta["residential_id"].to_numpy(), n),
        "date": np.tile(date_str, n_households),
        "hour": np.tile(hours, n_households),
        "energy": energy.reshape(-1).round(4),
    })
    ts_str = local.strftime("%Y-%m-%d %H:%M:%S").to_numpy()
    weather_frame = pd.concat([pd.DataFrame({
        "station_region": region, "timestamp": ts_str,
        "temperature": weather[region][0].round(2), "humidity": weather[region][1].round(1),
        "pressure": weather[region][2].round(3), "weather": weather[region][3]})
        for region in regions], ignore_index=True)
    meta_out = meta.copy()
    paths = (out_dir / "consumption.csv", out_dir / "weather.csv", out_dir / "metadata.csv")
    atomic_write_csv(paths[0], consumption, float_format="%.4f")
    atomic_write_csv(paths[1], weather_frame, float_format="%.4f")
    atomic_write_csv(paths[2], meta_out, float_format="%.4f")
    return paths
