"""Sun position from a low-order solar ephemeris.

Mean longitude/anomaly series with the equation of centre, apparent
obliquity, Greenwich mean sidereal time and a Bennett-type refraction term.
Accuracy is about 0.01 deg for 1950-2050, well inside the 0.5 deg budget.
"""
import math

import numpy as np

from .._accel import njit, use_numba

UNIX_EPOCH_JD = 2440587.5
J2000_JD = 2451545.0


@njit(cache=True, nogil=True)
def _solar_nb(unixtime, latitude, longitude):
    n = unixtime.shape[0]
    alt = np.empty(n)
    az = np.empty(n)
    deg = math.pi / 180.0
    for i in range(n):
        d = unixtime[i] / 86400.0 + UNIX_EPOCH_JD - J2000_JD
        mean_lon = (280.460 + 0.9856474 * d) % 360.0
        anomaly = ((357.528 + 0.9856003 * d) % 360.0) * deg
        ecl_lon = (mean_lon + 1.915 * math.sin(anomaly) + 0.020 * math.sin(2.0 * anomaly)) * deg
        obliq = (23.439 - 0.0000004 * d) * deg
        ra = math.atan2(math.cos(obliq) * math.sin(ecl_lon), math.cos(ecl_lon))
        dec = math.asin(math.sin(obliq) * math.sin(ecl_lon))
        gmst = (280.46061837 + 360.98564736629 * d) % 360.0
        ha = (gmst + longitude[i]) * deg - ra
        phi = latitude[i] * deg
        s = math.sin(phi) * math.sin(dec) + math.cos(phi) * math.cos(dec) * math.cos(ha)
        s = min(1.0, max(-1.0, s))
        a = math.asin(s) / deg
        if a > -1.0:
            a += 1.02 / math.tan((a + 10.3 / (a + 5.11)) * deg) / 60.0
        alt[i] = min(90.0, a)
        y = -math.cos(dec) * math.sin(ha)
        x = math.sin(dec) * math.cos(phi) - math.cos(dec) * math.sin(phi) * math.cos(ha)
        azimuth = (math.atan2(y, x) / deg) % 360.0
        if azimuth >= 360.0:
            azimuth = 0.0
        az[i] = azimuth
    return alt, az


def _solar_np(unixtime, latitude, longitude):
    deg = np.pi / 180.0
    d = unixtime / 86400.0 + UNIX_EPOCH_JD - J2000_JD
    mean_lon = np.mod(280.460 + 0.9856474 * d, 360.0)
    anomaly = np.mod(357.528 + 0.9856003 * d, 360.0) * deg
    ecl_lon = (mean_lon + 1.915 * np.sin(anomaly) + 0.020 * np.sin(2.0 * anomaly)) * deg
    obliq = (23.439 - 0.0000004 * d) * deg
    ra = np.arctan2(np.cos(obliq) * np.sin(ecl_lon), np.cos(ecl_lon))
    dec = np.arcsin(np.sin(obliq) * np.sin(ecl_lon))
    gmst = np.mod(280.46061837 + 360.98564736629 * d, 360.0)
    ha = (gmst + longitude) * deg - ra
    phi = latitude * deg
    s = np.sin(phi) * np.sin(dec) + np.cos(phi) * np.cos(dec) * np.cos(ha)
    alt = np.arcsin(np.clip(s, -1.0, 1.0)) / deg
    with np.errstate(divide="ignore", invalid="ignore"):
        refr = 1.02 / np.tan((alt + 10.3 / (alt + 5.11)) * deg) / 60.0
    alt = np.minimum(90.0, np.where(alt > -1.0, alt + refr, alt))
    y = -np.cos(dec) * np.sin(ha)
    x = np.sin(dec) * np.cos(phi) - np.cos(dec) * np.sin(phi) * np.cos(ha)
    az = np.mod(np.arctan2(y, x) / deg, 360.0)
    az = np.where(az >= 360.0, 0.0, az)
    return alt, az


def solar_geometry(unixtime, latitude, longitude):
    """Apparent altitude and azimuth (deg, clockwise from North) per row."""
    unixtime = np.ascontiguousarray(unixtime, dtype=np.float64)
    latitude = np.ascontiguousarray(np.broadcast_to(latitude, unixtime.shape), dtype=np.float64)
    longitude = np.ascontiguousarray(np.broadcast_to(longitude, unixtime.shape), dtype=np.float64)
    if use_numba():
        return _solar_nb(unixtime, latitude, longitude)
    return _solar_np(unixtime, latitude, longitude)
