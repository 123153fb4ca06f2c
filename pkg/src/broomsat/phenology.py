"""Thermal-time alignment of per-pixel feature series.

Growing degree days use the simple averaging method,
``max(0, (t_max + t_min) / 2 - t_base)``, accumulated from the transplant
date; the value on a given date counts the days strictly before it. Series
observed on acquisition dates are resampled onto ``n_steps`` evenly spaced
cumulative-GDD points from 0 to the harvest GDD.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .indices import INDEX_NAMES
from .scene_store import BAND_NAMES, FieldRecord
from .traits import TRAIT_NAMES
from .weather import WeatherSeries

FEATURE_NAMES = BAND_NAMES + INDEX_NAMES + TRAIT_NAMES
N_FEATURES = len(FEATURE_NAMES)
N_STEPS = 48
DEFAULT_T_BASE = 10.0


def daily_gdd(t_max, t_min, t_base=DEFAULT_T_BASE):
    t_max = np.asarray(t_max, dtype=np.float64)
    t_min = np.asarray(t_min, dtype=np.float64)
    if (t_min > t_max).any():
        raise ValueError("t_min exceeds t_max")
    out = np.maximum(0.0, (t_max + t_min) / 2.0 - t_base)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class GddCurve:
    dates: np.ndarray  # datetime64[D]
    cumulative: np.ndarray
    base_temperature: float

    def at(self, date) -> float:
        d = np.datetime64(date, "D")
        k = int(np.searchsorted(self.dates, d))
        if k >= self.dates.size or self.dates[k] != d:
            raise DataError(f"{date} outside the GDD curve ({self.dates[0]}..{self.dates[-1]})",
                            code="coverage")
        return float(self.cumulative[k])

    def covers(self, date) -> bool:
        d = np.datetime64(date, "D")
        return bool(self.dates.size and self.dates[0] <= d <= self.dates[-1])

    @property
    def total(self) -> float:
        return float(self.cumulative[-1])


def cumulative_gdd(weather: WeatherSeries, transplant_date, harvest_date,
                   t_base=DEFAULT_T_BASE) -> GddCurve:
    season = weather.window(transplant_date, harvest_date)
    daily = daily_gdd(season.t_max, season.t_min, t_base)
    cum = np.concatenate([[0.0], np.cumsum(daily)[:-1]])
    return GddCurve(season.dates, cum, float(t_base))


@dataclass(frozen=True)
class StageEstimate:
    transplant_date: dt.date
    peak_date: dt.date
    harvest_date: dt.date
    transplant_gdd: float | None = None
    peak_gdd: float | None = None
    harvest_gdd: float | None = None

    def __post_init__(self):
        if not self.transplant_date < self.peak_date < self.harvest_date:
            raise DataError("stage dates must satisfy transplant < peak < harvest", code="stages")

    def with_gdd(self, curve: GddCurve) -> "StageEstimate":
        def g(d):
            return curve.at(d) if curve.covers(d) else None
        return StageEstimate(self.transplant_date, self.peak_date, self.harvest_date,
                             g(self.transplant_date), g(self.peak_date), g(self.harvest_date))

    def to_json(self) -> dict:
        return {
            "transplant_date": self.transplant_date.isoformat(),
            "peak_date": self.peak_date.isoformat(),
            "harvest_date": self.harvest_date.isoformat(),
            "transplant_gdd": self.transplant_gdd,
            "peak_gdd": self.peak_gdd,
            "harvest_gdd": self.harvest_gdd,
        }

    @classmethod
    def from_json(cls, d) -> "StageEstimate":
        return cls(dt.date.fromisoformat(d["transplant_date"]),
                   dt.date.fromisoformat(d["peak_date"]),
                   dt.date.fromisoformat(d["harvest_date"]),
                   d.get("transplant_gdd"), d.get("peak_gdd"), d.get("harvest_gdd"))


def moving_average(values, window=3):
    """Centered moving average; windows are truncated at the ends."""
    values = np.asarray(values, dtype=np.float64)
    half = window // 2
    out = np.empty_like(values)
    for i in range(values.size):
        out[i] = values[max(0, i - half):i + half + 1].mean()
    return out


def detect_stages(ccc_series, low=0.2, high=0.5, window=3) -> StageEstimate:
    """Transplant, peak and harvest dates from a field-median CCC series.

    After smoothing, the peak is the (earliest) maximum; transplant is the
    last observation before the curve first exceeds ``min + low * amplitude``;
    harvest is the first observation after the peak that falls below
    ``min + high * amplitude``.
    """
    pairs = sorted((d, float(v)) for d, v in ccc_series)
    if len(pairs) < 5:
        raise DataError("stage detection needs at least 5 observations", code="coverage")
    dates = [d for d, _ in pairs]
    smooth = moving_average([v for _, v in pairs], window)
    lo, hi = smooth.min(), smooth.max()
    amp = hi - lo
    if not np.isfinite(amp) or amp <= 1e-12 * max(1.0, abs(hi)):
        raise DataError("CCC series is constant; stages are undefined", code="degenerate")
    peak = int(np.argmax(smooth))
    above = np.flatnonzero(smooth > lo + low * amp)
    first = int(above[0])
    if first == 0:
        raise DataError("CCC is already high at the first observation; season start not covered",
                        code="coverage")
    after = np.flatnonzero(smooth[peak + 1:] < lo + high * amp)
    if after.size == 0:
        raise DataError("no decline after the CCC peak; harvest not detectable", code="coverage")
    harvest = peak + 1 + int(after[0])
    return StageEstimate(dates[first - 1], dates[peak], dates[harvest])


def gdd_grid(harvest_gdd: float, n_steps=N_STEPS):
    if not harvest_gdd > 0:
        raise DataError("harvest GDD must be positive", code="gdd")
    return np.linspace(0.0, harvest_gdd, n_steps)


def resample_to_gdd_grid(gdd, values, n_steps=N_STEPS, harvest_gdd=None, valid=None):
    """Piecewise-linear resampling onto the evenly spaced GDD grid.

    Invalid or non-finite observations are dropped first. Grid points
    outside the observed range take the nearest endpoint value; repeated
    GDD values are averaged.
    """
    gdd = np.asarray(gdd, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    keep = np.isfinite(values) & np.isfinite(gdd)
    if valid is not None:
        keep &= np.asarray(valid, dtype=bool)
    if keep.sum() < 2:
        raise DataError("need at least two valid observations to resample", code="coverage")
    x, y = gdd[keep], values[keep]
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    ux, inv = np.unique(x, return_inverse=True)
    if ux.size != x.size:
        y = np.bincount(inv, weights=y) / np.bincount(inv)
        x = ux
    if harvest_gdd is None:
        harvest_gdd = float(x[-1])
    return np.interp(gdd_grid(harvest_gdd, n_steps), x, y)


def interpolation_matrix(gdd_obs, grid):
    """Matrix ``M`` with ``M @ obs == np.interp(grid, gdd_obs, obs)``."""
    n = len(gdd_obs)
    return np.stack([np.interp(grid, gdd_obs, np.eye(n)[j]) for j in range(n)], axis=1)


@dataclass
class FeatureCube:
    """All 37 feature planes of one acquisition, in FEATURE_NAMES order."""

    date: dt.date
    values: np.ndarray  # (37, height, width)
    valid: np.ndarray


@dataclass
class AlignedStack:
    field_id: str
    pixel_ids: np.ndarray  # flat row-major index within the field raster
    data: np.ndarray  # (pixels, 37, n_steps)
    labels: np.ndarray  # 1 = infested
    gdd_grid: np.ndarray
    feature_names: list[str]
    peak_step: int
    dropped_pixels: int = 0

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[1] != len(self.feature_names):
            raise DataError("stack data must be (pixels, features, steps)", code="shape")
        if self.data.shape[2] != self.gdd_grid.size or (np.diff(self.gdd_grid) <= 0).any():
            raise DataError("gdd_grid must be strictly increasing, one value per step", code="shape")

    def save(self, path):
        np.savez(path, field_id=np.array(self.field_id), pixel_ids=self.pixel_ids,
                 data=self.data, labels=self.labels, gdd_grid=self.gdd_grid,
                 feature_names=np.array(self.feature_names), peak_step=np.array(self.peak_step),
                 dropped_pixels=np.array(self.dropped_pixels))

    @classmethod
    def load(cls, path) -> "AlignedStack":
        with np.load(path) as z:
            return cls(str(z["field_id"]), z["pixel_ids"], z["data"], z["labels"], z["gdd_grid"],
                       [str(s) for s in z["feature_names"]], int(z["peak_step"]),
                       int(z["dropped_pixels"]))


def assemble_feature_stack(field: FieldRecord, cubes, mask, gdd_curve: GddCurve,
                           stages: StageEstimate, n_steps=N_STEPS,
                           feature_names=FEATURE_NAMES) -> AlignedStack:
    """Resample every vegetation pixel's 37 series onto the GDD grid.

    Only acquisitions between the stage transplant and harvest dates are
    used. Pixels where some feature has fewer than two valid observations
    are dropped and counted in ``dropped_pixels``.
    """
    mask = np.asarray(mask, dtype=bool)
    pix = np.flatnonzero(mask.ravel())
    if pix.size == 0:
        raise DataError(f"field {field.field_id}: no vegetation pixels", code="empty_mask")
    season = [c for c in sorted(cubes, key=lambda c: c.date)
              if stages.transplant_date <= c.date <= stages.harvest_date and gdd_curve.covers(c.date)]
    if len(season) < 2:
        raise DataError(f"field {field.field_id}: fewer than two clear scenes in season",
                        code="no_scenes")
    harvest_gdd = gdd_curve.at(stages.harvest_date)
    grid = gdd_grid(harvest_gdd, n_steps)
    obs_gdd = np.array([gdd_curve.at(c.date) for c in season])
    # (obs, features, pixels)
    vals = np.stack([c.values.reshape(c.values.shape[0], -1)[:, pix] for c in season])
    ok = np.stack([c.valid.reshape(c.valid.shape[0], -1)[:, pix] for c in season]) & np.isfinite(vals)
    n_feat = vals.shape[1]

    out = np.empty((pix.size, n_feat, n_steps))
    keep = np.ones(pix.size, dtype=bool)
    distinct = np.unique(obs_gdd).size == obs_gdd.size
    full = ok.all(axis=0)  # (features, pixels)
    if distinct:
        M = interpolation_matrix(obs_gdd, grid)
        out[:] = np.einsum("so,ofp->pfs", M, np.where(ok, vals, 0.0))
    for f, p in zip(*np.nonzero(~full if distinct else np.ones_like(full))):
        if ok[:, f, p].sum() < 2:
            keep[p] = False
            continue
        out[p, f] = resample_to_gdd_grid(obs_gdd, vals[:, f, p], n_steps, harvest_gdd,
                                         valid=ok[:, f, p])
    if not keep.any():
        raise DataError(f"field {field.field_id}: no pixel has enough valid observations",
                        code="empty_mask")
    peak_gdd = gdd_curve.at(stages.peak_date) if gdd_curve.covers(stages.peak_date) else harvest_gdd / 2
    peak_step = int(np.argmin(np.abs(grid - peak_gdd)))
    label = 1 if field.is_infested else 0
    return AlignedStack(field.field_id, pix[keep], out[keep], np.full(int(keep.sum()), label),
                        grid, list(feature_names), peak_step, int((~keep).sum()))


def save_stages(path, detected: StageEstimate | None, used: StageEstimate):
    Path(path).write_text(json.dumps({"detected": detected.to_json() if detected else None,
                                      "used": used.to_json()}, indent=1))


def load_stages(path):
    doc = json.loads(Path(path).read_text())
    detected = StageEstimate.from_json(doc["detected"]) if doc["detected"] else None
    return detected, StageEstimate.from_json(doc["used"])
