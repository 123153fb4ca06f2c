"""Daily temperature series: CSV files and the Open-Meteo archive client."""

from __future__ import annotations

import csv
import datetime as dt
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .errors import DataError, FormatError

ARCHIVE_URL = "https://archive-api.open-meteo.com/v1/archive"
CACHE_ENV = "BROOMSAT_CACHE_DIR"


@dataclass(frozen=True, eq=False)
class WeatherSeries:
    dates: np.ndarray  # datetime64[D], strictly increasing, one day apart
    t_min: np.ndarray
    t_max: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        t_min = np.asarray(self.t_min, dtype=np.float64)
        t_max = np.asarray(self.t_max, dtype=np.float64)
        if not (dates.shape == t_min.shape == t_max.shape) or dates.ndim != 1:
            raise FormatError("weather columns differ in length", code="shape")
        if not (np.isfinite(t_min).all() and np.isfinite(t_max).all()):
            raise FormatError("weather series contains missing temperatures", code="malformed")
        steps = np.diff(dates).astype(np.int64)
        if steps.size and (steps < 1).any():
            raise DataError("weather dates must be strictly increasing", code="order")
        if steps.size and (steps != 1).any():
            gap = dates[:-1][steps != 1][0]
            raise DataError(f"weather series has a gap after {gap}", code="gap")
        if (t_min > t_max).any():
            raise DataError("t_min exceeds t_max on some day", code="order")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "t_min", t_min)
        object.__setattr__(self, "t_max", t_max)

    def __len__(self):
        return self.dates.shape[0]

    def window(self, start: dt.date, end: dt.date) -> "WeatherSeries":
        """Days ``start..end`` inclusive; raises if not fully covered."""
        s, e = np.datetime64(start, "D"), np.datetime64(end, "D")
        if len(self) == 0 or s < self.dates[0] or e > self.dates[-1]:
            raise DataError(f"weather does not cover {start}..{end}", code="coverage")
        sel = (self.dates >= s) & (self.dates <= e)
        return WeatherSeries(self.dates[sel], self.t_min[sel], self.t_max[sel])


def read_weather_csv(path) -> WeatherSeries:
    """CSV with header ``date,t_min,t_max`` and ISO dates."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"weather file {path} not found", code="missing")
    dates, lo, hi = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"date", "t_min", "t_max"} <= set(reader.fieldnames):
            raise FormatError(f"{path}: header must be date,t_min,t_max", code="malformed")
        for row in reader:
            try:
                dates.append(np.datetime64(row["date"], "D"))
                lo.append(float(row["t_min"]))
                hi.append(float(row["t_max"]))
            except ValueError as exc:
                raise FormatError(f"{path}: bad row {row}: {exc}", code="malformed") from exc
    return WeatherSeries(np.array(dates, dtype="datetime64[D]"), lo, hi)


def write_weather_csv(series: WeatherSeries, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "t_min", "t_max"])
        for d, lo, hi in zip(series.dates, series.t_min, series.t_max):
            w.writerow([str(d), repr(float(lo)), repr(float(hi))])
    return path


def parse_archive_response(text: str, start: dt.date, end: dt.date) -> WeatherSeries:
    """Parse the archive endpoint's JSON body into a gap-checked series."""
    try:
        daily = json.loads(text)["daily"]
        days = [np.datetime64(t, "D") for t in daily["time"]]
        t_max = daily["temperature_2m_max"]
        t_min = daily["temperature_2m_min"]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed archive response: {exc}", code="malformed") from exc
    if not (len(days) == len(t_max) == len(t_min)):
        raise FormatError("archive response columns differ in length", code="malformed")
    if any(v is None for v in t_max) or any(v is None for v in t_min):
        raise DataError("archive response has missing temperatures", code="gap")
    expected = np.arange(np.datetime64(start, "D"), np.datetime64(end, "D") + 1)
    got = np.array(days, dtype="datetime64[D]")
    if got.shape != expected.shape or (got != expected).any():
        missing = np.setdiff1d(expected, got)
        where = f" (first missing day {missing[0]})" if missing.size else ""
        raise DataError(f"archive response does not cover {start}..{end} day by day{where}",
                        code="gap")
    return WeatherSeries(got, t_min, t_max)


_locks: dict[str, threading.Lock] = {}
_locks_guard = threading.Lock()


def _key_lock(key: str) -> threading.Lock:
    with _locks_guard:
        return _locks.setdefault(key, threading.Lock())


def cache_path(cache_dir, latitude, longitude, start, end) -> Path:
    return Path(cache_dir) / f"{latitude}_{longitude}_{start.isoformat()}_{end.isoformat()}.json"


def fetch_weather(latitude: float, longitude: float, start_date: dt.date, end_date: dt.date,
                  cache_dir=None, session=None, base_url=ARCHIVE_URL,
                  timeout=30.0) -> WeatherSeries:
    """Daily t_min/t_max from the Open-Meteo archive, cached as raw text.

    ``cache_dir`` defaults to ``$BROOMSAT_CACHE_DIR`` (or ``./weather_cache``).
    A cached response is parsed without touching the network.
    """
    if cache_dir is None:
        cache_dir = os.environ.get(CACHE_ENV, "weather_cache")
    path = cache_path(cache_dir, latitude, longitude, start_date, end_date)
    with _key_lock(str(path)):
        if path.is_file():
            return parse_archive_response(path.read_text(encoding="utf-8"), start_date, end_date)
        params = {
            "latitude": latitude,
            "longitude": longitude,
            "start_date": start_date.isoformat(),
            "end_date": end_date.isoformat(),
            "daily": "temperature_2m_max,temperature_2m_min",
            "timezone": "auto",
        }
        http = session if session is not None else requests
        try:
            resp = http.get(base_url, params=params, timeout=timeout)
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise DataError(f"weather request failed and no cached copy at {path}: {exc}",
                            code="network") from exc
        text = resp.text
        series = parse_archive_response(text, start_date, end_date)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(path)
        return series
