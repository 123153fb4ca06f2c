"""Scene bundles and the field registry.

A scene bundle is a directory holding

* ``meta.json`` -- acquisition date (ISO-8601), ``cloud_fraction``, the four
  sun/view angles in degrees, ``width``, ``height``, ``reflectance_scale``,
  ``nodata`` and the ``bands`` order list;
* ``bands.bin`` -- band-sequential, row-major, little-endian float32 values
  in stored units (reflectance = stored * reflectance_scale).

Pixels equal to the no-data sentinel (or non-finite) are invalid; their
reflectance is NaN and the per-band validity mask is False.
"""

from __future__ import annotations

import datetime as dt
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, FormatError

DEFAULT_NODATA = -9999.0
META_FILE = "meta.json"
BANDS_FILE = "bands.bin"


class BandId(enum.Enum):
    B1 = 443
    B2 = 490
    B3 = 560
    B4 = 665
    B5 = 705
    B6 = 740
    B7 = 783
    B8 = 842
    B8A = 865
    B9 = 945
    B11 = 1610
    B12 = 2190

    @property
    def wavelength(self) -> int:
        return self.value


BAND_NAMES = [b.name for b in BandId]
BAND_INDEX = {name: i for i, name in enumerate(BAND_NAMES)}


class Geometry(NamedTuple):
    sun_zenith: float
    sun_azimuth: float
    view_zenith: float
    view_azimuth: float


@dataclass(frozen=True)
class SceneMeta:
    acquisition_date: dt.date
    cloud_fraction: float
    sun_zenith: float
    sun_azimuth: float
    view_zenith: float
    view_azimuth: float
    width: int
    height: int
    reflectance_scale: float = 1e-4
    nodata: float = DEFAULT_NODATA

    def __post_init__(self):
        if not 0.0 <= self.cloud_fraction <= 1.0:
            raise FormatError(f"cloud_fraction {self.cloud_fraction} outside [0, 1]", code="meta")
        for name in ("sun_zenith", "view_zenith"):
            if not 0.0 <= getattr(self, name) < 90.0:
                raise FormatError(f"{name} must lie in [0, 90)", code="meta")
        for name in ("sun_azimuth", "view_azimuth"):
            if not 0.0 <= getattr(self, name) < 360.0:
                raise FormatError(f"{name} must lie in [0, 360)", code="meta")
        if self.width < 1 or self.height < 1:
            raise FormatError("width and height must be >= 1", code="meta")
        if not self.reflectance_scale > 0:
            raise FormatError("reflectance_scale must be positive", code="meta")

    @property
    def geometry(self) -> Geometry:
        return Geometry(self.sun_zenith, self.sun_azimuth, self.view_zenith, self.view_azimuth)

    def to_json(self) -> dict:
        return {
            "acquisition_date": self.acquisition_date.isoformat(),
            "cloud_fraction": self.cloud_fraction,
            "sun_zenith": self.sun_zenith,
            "sun_azimuth": self.sun_azimuth,
            "view_zenith": self.view_zenith,
            "view_azimuth": self.view_azimuth,
            "width": self.width,
            "height": self.height,
            "reflectance_scale": self.reflectance_scale,
            "nodata": self.nodata,
            "bands": BAND_NAMES,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SceneMeta":
        try:
            return cls(
                acquisition_date=dt.date.fromisoformat(d["acquisition_date"]),
                cloud_fraction=float(d["cloud_fraction"]),
                sun_zenith=float(d["sun_zenith"]),
                sun_azimuth=float(d["sun_azimuth"]),
                view_zenith=float(d["view_zenith"]),
                view_azimuth=float(d["view_azimuth"]),
                width=int(d["width"]),
                height=int(d["height"]),
                reflectance_scale=float(d.get("reflectance_scale", 1e-4)),
                nodata=float(d.get("nodata", DEFAULT_NODATA)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad scene metadata: {exc}", code="meta") from exc


@dataclass(frozen=True, eq=False)
class Scene:
    """One acquisition. ``stored`` keeps the float32 payload for exact rewrites."""

    meta: SceneMeta
    stored: np.ndarray  # (12, height, width) float32
    planes: np.ndarray = field(init=False)  # reflectance, NaN where invalid
    valid: np.ndarray = field(init=False)  # (12, height, width) bool

    def __post_init__(self):
        stored = np.asarray(self.stored, dtype=np.float32)
        expect = (len(BandId), self.meta.height, self.meta.width)
        if stored.shape != expect:
            raise FormatError(f"band array shape {stored.shape} != {expect}", code="size_mismatch")
        stored.setflags(write=False)
        valid = np.isfinite(stored) & (stored != np.float32(self.meta.nodata))
        planes = np.where(valid, stored.astype(np.float64) * self.meta.reflectance_scale, np.nan)
        valid.setflags(write=False)
        planes.setflags(write=False)
        object.__setattr__(self, "stored", stored)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "planes", planes)

    @classmethod
    def from_reflectance(cls, meta: SceneMeta, reflectance, valid=None) -> "Scene":
        refl = np.asarray(reflectance, dtype=np.float64)
        stored = (refl / meta.reflectance_scale).astype(np.float32)
        if valid is not None:
            stored = np.where(valid, stored, np.float32(meta.nodata))
        return cls(meta, stored)

    @property
    def date(self) -> dt.date:
        return self.meta.acquisition_date

    @property
    def pixel_valid(self) -> np.ndarray:
        """True where every band is valid."""
        return self.valid.all(axis=0)

    def band(self, name: str) -> np.ndarray:
        return self.planes[BAND_INDEX[name]]


def load_scene(bundle_path) -> Scene:
    bundle = Path(bundle_path)
    meta_path, bands_path = bundle / META_FILE, bundle / BANDS_FILE
    for p in (meta_path, bands_path):
        if not p.is_file():
            raise FormatError(f"missing {p}", code="missing")
    try:
        raw_meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{meta_path}: {exc}", code="meta") from exc
    bands = raw_meta.get("bands", BAND_NAMES)
    if len(bands) != len(BandId):
        raise FormatError(f"{meta_path}: {len(bands)} bands declared, 12 required",
                          code="band_count")
    if list(bands) != BAND_NAMES:
        raise FormatError(f"{meta_path}: band order must be {BAND_NAMES}", code="band_order")
    meta = SceneMeta.from_json(raw_meta)
    payload = bands_path.read_bytes()
    expect = len(BandId) * meta.width * meta.height * 4
    if len(payload) != expect:
        raise FormatError(f"{bands_path}: {len(payload)} bytes, header implies {expect}",
                          code="size_mismatch")
    stored = np.frombuffer(payload, dtype="<f4").reshape(len(BandId), meta.height, meta.width)
    return Scene(meta, stored.astype(np.float32))


def write_scene(scene: Scene, bundle_path) -> Path:
    bundle = Path(bundle_path)
    bundle.mkdir(parents=True, exist_ok=True)
    (bundle / META_FILE).write_text(json.dumps(scene.meta.to_json(), indent=1), encoding="utf-8")
    (bundle / BANDS_FILE).write_bytes(np.ascontiguousarray(scene.stored, dtype="<f4").tobytes())
    return bundle


def load_scene_series(scene_dir) -> list[Scene]:
    """Load every bundle below ``scene_dir`` in chronological order."""
    root = Path(scene_dir)
    if not root.is_dir():
        raise FormatError(f"scene directory {root} does not exist", code="missing")
    scenes = [load_scene(p) for p in sorted(root.iterdir()) if (p / META_FILE).is_file()]
    return sorted(scenes, key=lambda s: s.date)


def filter_clear(scenes, max_cloud=0.10) -> list[Scene]:
    """Scenes with ``cloud_fraction < max_cloud`` (strict), in date order."""
    if not 0.0 <= max_cloud <= 1.0:
        raise ValueError("max_cloud must lie in [0, 1]")
    ordered = sorted(scenes, key=lambda s: s.date)
    return [s for s in ordered if s.meta.cloud_fraction < max_cloud]


def pixel_spectrum(scene: Scene, x: int, y: int):
    """Return ``(spectrum, valid)`` at column ``x``, row ``y`` in BandId order."""
    if not (0 <= x < scene.meta.width and 0 <= y < scene.meta.height):
        raise IndexError(f"pixel ({x}, {y}) outside {scene.meta.width}x{scene.meta.height} scene")
    return scene.planes[:, y, x].copy(), bool(scene.valid[:, y, x].all())


# -- field registry -------------------------------------------------------------

LABELS = ("infested", "clean")


@dataclass(frozen=True)
class FieldRecord:
    field_id: str
    label: str
    transplant_date: dt.date
    harvest_date: dt.date
    scene_dir: Path
    weather_ref: Path | dict
    latitude: float | None = None
    longitude: float | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise ConfigError(f"field {self.field_id}: label must be one of {LABELS}")
        if not self.transplant_date < self.harvest_date:
            raise ConfigError(f"field {self.field_id}: transplant_date must precede harvest_date")

    @property
    def is_infested(self) -> bool:
        return self.label == "infested"


def load_fields(registry_path) -> list[FieldRecord]:
    """Parse ``fields.json``; relative paths resolve against its directory.

    ``weather_ref`` is either a path to a weather CSV or an object with
    ``latitude`` and ``longitude`` for the archive client.
    """
    path = Path(registry_path)
    if not path.is_file():
        raise ConfigError(f"field registry {path} not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    base = path.parent
    records = []
    for entry in doc.get("fields", []):
        try:
            weather = entry["weather_ref"]
            if isinstance(weather, str):
                weather = base / weather
            records.append(FieldRecord(
                field_id=str(entry["field_id"]),
                label=entry["label"],
                transplant_date=dt.date.fromisoformat(entry["transplant_date"]),
                harvest_date=dt.date.fromisoformat(entry["harvest_date"]),
                scene_dir=base / entry["scene_dir"],
                weather_ref=weather,
                latitude=entry.get("latitude"),
                longitude=entry.get("longitude"),
            ))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{path}: bad field entry {entry!r}: {exc}") from exc
    return records


def write_fields(records, registry_path) -> Path:
    path = Path(registry_path)
    base = path.parent

    def rel(p):
        p = Path(p)
        try:
            return p.relative_to(base).as_posix()
        except ValueError:
            return str(p)

    entries = []
    for r in records:
        entry = {
            "field_id": r.field_id,
            "label": r.label,
            "transplant_date": r.transplant_date.isoformat(),
            "harvest_date": r.harvest_date.isoformat(),
            "scene_dir": rel(r.scene_dir),
            "weather_ref": r.weather_ref if isinstance(r.weather_ref, dict) else rel(r.weather_ref),
        }
        if r.latitude is not None:
            entry["latitude"] = r.latitude
            entry["longitude"] = r.longitude
        entries.append(entry)
    path.write_text(json.dumps({"fields": entries}, indent=1), encoding="utf-8")
    return path
