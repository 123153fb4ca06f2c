"""Spectral vegetation indices mapped onto the twelve Sentinel-2 bands.

Every index is evaluated per pixel. A pixel is invalid when any band it
reads is invalid or when any guarded denominator has magnitude below
``EPS`` (1e-6 reflectance units); invalid pixels hold NaN.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .scene_store import BAND_INDEX, Scene

EPS = 1e-6


class IndexKind(enum.Enum):
    NDVI = "NDVI"
    ARI = "ARI"
    mARI = "mARI"
    ARVI = "ARVI"
    CHL_RED_EDGE = "CHL-RED-EDGE"
    REPO = "REPO"
    EVI = "EVI"
    EVI2 = "EVI2"
    GNDVI = "GNDVI"
    MCRI = "MCRI"
    MI = "MI"
    NDMI = "NDMI"
    NDWI = "NDWI"
    NDMIMS = "NDMIMS"
    NDCI = "NDCI"
    PSSRb1 = "PSSRb1"
    SAVI = "SAVI"
    SIPI = "SIPI"
    PSRI = "PSRI"
    NDYI = "NDYI"

    @property
    def acronym(self) -> str:
        return self.value


INDEX_NAMES = [k.name for k in IndexKind]

# (a, b) pairs for the (a - b) / (a + b) indices
NORMALIZED_DIFFERENCES = {
    IndexKind.NDVI: ("B8", "B4"),
    IndexKind.GNDVI: ("B8", "B3"),
    IndexKind.NDMI: ("B8", "B11"),
    IndexKind.NDWI: ("B3", "B8"),
    IndexKind.NDMIMS: ("B8", "B12"),
    IndexKind.NDCI: ("B5", "B4"),
    IndexKind.NDYI: ("B3", "B2"),
    IndexKind.MI: ("B8A", "B11"),
}

# bands read by each formula, used for validity propagation
INDEX_BANDS = {
    **{k: v for k, v in NORMALIZED_DIFFERENCES.items()},
    IndexKind.ARI: ("B3", "B5"),
    IndexKind.mARI: ("B3", "B5", "B7"),
    IndexKind.ARVI: ("B8", "B4", "B2"),
    IndexKind.CHL_RED_EDGE: ("B7", "B5"),
    IndexKind.PSSRb1: ("B8", "B4"),
    IndexKind.REPO: ("B4", "B5", "B6", "B7"),
    IndexKind.EVI: ("B8", "B4", "B2"),
    IndexKind.EVI2: ("B8", "B4"),
    IndexKind.SAVI: ("B8", "B4"),
    IndexKind.MCRI: ("B3", "B4", "B5"),
    IndexKind.SIPI: ("B8", "B1", "B4"),
    IndexKind.PSRI: ("B4", "B2", "B6"),
}


def _formula(kind: IndexKind, b):
    """Return ``(value, guarded_denominators)`` for band mapping ``b``."""
    if kind in NORMALIZED_DIFFERENCES:
        x, y = (b[n] for n in NORMALIZED_DIFFERENCES[kind])
        den = x + y
        return (x - y) / den, [den]
    if kind is IndexKind.ARI:
        return 1.0 / b["B3"] - 1.0 / b["B5"], [b["B3"], b["B5"]]
    if kind is IndexKind.mARI:
        return (1.0 / b["B3"] - 1.0 / b["B5"]) * b["B7"], [b["B3"], b["B5"]]
    if kind is IndexKind.ARVI:
        rb = 2.0 * b["B4"] - b["B2"]
        den = b["B8"] + rb
        return (b["B8"] - rb) / den, [den]
    if kind is IndexKind.CHL_RED_EDGE:
        return b["B7"] / b["B5"] - 1.0, [b["B5"]]
    if kind is IndexKind.PSSRb1:
        return b["B8"] / b["B4"], [b["B4"]]
    if kind is IndexKind.REPO:
        den = b["B6"] - b["B5"]
        return 705.0 + 35.0 * (((b["B4"] + b["B7"]) / 2.0 - b["B5"]) / den), [den]
    if kind is IndexKind.EVI:
        den = b["B8"] + 6.0 * b["B4"] - 7.5 * b["B2"] + 1.0
        return 2.5 * (b["B8"] - b["B4"]) / den, [den]
    if kind is IndexKind.EVI2:
        den = b["B8"] + 2.4 * b["B4"] + 1.0
        return 2.5 * (b["B8"] - b["B4"]) / den, [den]
    if kind is IndexKind.SAVI:
        den = b["B8"] + b["B4"] + 0.5
        return 1.5 * (b["B8"] - b["B4"]) / den, [den]
    if kind is IndexKind.MCRI:
        return ((b["B5"] - b["B4"]) - 0.2 * (b["B5"] - b["B3"])) * (b["B5"] / b["B4"]), [b["B4"]]
    if kind is IndexKind.SIPI:
        den = b["B8"] - b["B4"]
        return (b["B8"] - b["B1"]) / den, [den]
    if kind is IndexKind.PSRI:
        return (b["B4"] - b["B2"]) / b["B6"], [b["B6"]]
    raise ValueError(f"unknown index {kind}")


def index_values(kind: IndexKind, bands, band_valid=None):
    """Evaluate ``kind`` on an array whose leading axis is the 12 bands.

    Returns ``(values, valid)`` with NaN at invalid positions.
    """
    bands = np.asarray(bands, dtype=np.float64)
    b = {name: bands[i] for name, i in BAND_INDEX.items()}
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        value, dens = _formula(kind, b)
    valid = np.ones(np.shape(value), dtype=bool)
    for den in dens:
        valid &= np.abs(den) >= EPS
    for name in INDEX_BANDS[kind]:
        valid &= np.isfinite(b[name])
        if band_valid is not None:
            valid &= np.asarray(band_valid)[BAND_INDEX[name]]
    valid &= np.isfinite(value)
    return np.where(valid, value, np.nan), valid


@dataclass(frozen=True, eq=False)
class IndexPlane:
    kind: IndexKind
    values: np.ndarray
    valid: np.ndarray


def compute_index(scene: Scene, kind: IndexKind) -> IndexPlane:
    values, valid = index_values(kind, scene.planes, scene.valid)
    return IndexPlane(kind, values, valid)


def compute_all(scene: Scene) -> list[IndexPlane]:
    return [compute_index(scene, kind) for kind in IndexKind]


def write_index_csv(planes, path):
    """One row per pixel valid in every plane, columns = index acronyms."""
    planes = list(planes)
    valid = np.logical_and.reduce([p.valid for p in planes])
    cols = [p.values[valid] for p in planes]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([p.kind.acronym for p in planes])
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
    return int(valid.sum())
