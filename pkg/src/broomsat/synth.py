"""Synthetic data with a known generative model.

Two generators live here:

* :func:`gen_dataset` works directly in feature space: every pixel is a
  (48 steps, 37 features) tensor made of a trapezoid seasonal profile, a
  class offset on the informative features during the plateau steps, and
  white noise.
* :func:`gen_campaign` writes a complete on-disk campaign (scene bundles,
  weather CSVs, trait MLP specs, field registry) whose reflectances are
  solved so that the informative indices and traits hit prescribed targets.
  Fields come in infested/clean twins sharing one observation design, so
  field identity says nothing about the class.

In both, the clean class (label 0) carries the positive offset; infested
pixels (label 1) sit on the base profile.

:func:`bayes_oracle` and :func:`campaign_oracle` estimate the accuracy of
the likelihood-ratio classifier under each generative model by Monte
Carlo, with a Wilson 95% interval.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .errors import ConfigError, DataError
from .lstm import Dataset
from .phenology import FEATURE_NAMES, N_STEPS, daily_gdd
from .scene_store import BAND_INDEX, FieldRecord, Scene, SceneMeta, write_fields, write_scene
from .traits import DEFAULT_VALID_RANGE, MlpSpec, TraitKind, save_mlp
from .weather import WeatherSeries, write_weather_csv

INFORMATIVE = ("NDMI", "CCC", "FAPAR", "CHL_RED_EDGE")


def trapezoid(u, rise_end=0.3, fall_start=0.7):
    """0 -> 1 over ``[0, rise_end]``, flat to ``fall_start``, back to 0 at 1."""
    u = np.asarray(u, dtype=np.float64)
    up = np.clip(u / rise_end, 0.0, 1.0)
    down = np.clip((1.0 - u) / (1.0 - fall_start), 0.0, 1.0)
    return np.where((u < 0) | (u > 1), 0.0, np.minimum(up, down))


def plateau_mask(u, rise_end=0.3, fall_start=0.7):
    u = np.asarray(u, dtype=np.float64)
    return (u >= rise_end) & (u <= fall_start)


def wilson_interval(successes, n, z=1.959963984540054):
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return float(mid - half), float(mid + half)


@dataclass(frozen=True)
class OracleEstimate:
    accuracy: float
    ci_low: float
    ci_high: float
    n_samples: int
    closed_form: float | None = None

    @property
    def ci_width(self):
        return self.ci_high - self.ci_low


# -- feature-space generator ---------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    n_pixels: int = 2000  # per class
    informative: tuple = INFORMATIVE
    offset: float | tuple = 1.0  # in units of noise_sd; one value or one per informative feature
    noise_sd: float = 1.0
    amplitude: float = 3.0  # trapezoid height, same for every feature
    rise_end: float = 0.3
    fall_start: float = 0.7
    n_steps: int = N_STEPS
    feature_names: tuple = tuple(FEATURE_NAMES)
    seed: int = 0

    def __post_init__(self):
        if not self.noise_sd > 0:
            raise ConfigError("noise_sd must be positive")
        if self.n_pixels < 1 or self.n_steps < 2:
            raise ConfigError("n_pixels >= 1 and n_steps >= 2 required")
        unknown = set(self.informative) - set(self.feature_names)
        if unknown:
            raise ConfigError(f"informative features {sorted(unknown)} not in feature_names")
        if not np.isfinite(self.offsets).all():
            raise ConfigError("offsets must be finite")
        if not 0 < self.rise_end <= self.fall_start < 1:
            raise ConfigError("need 0 < rise_end <= fall_start < 1")

    @property
    def offsets(self) -> np.ndarray:
        off = np.broadcast_to(np.asarray(self.offset, dtype=np.float64), (len(self.informative),))
        return off.copy()

    @property
    def step_u(self):
        return np.linspace(0.0, 1.0, self.n_steps)

    @property
    def plateau_steps(self):
        return plateau_mask(self.step_u, self.rise_end, self.fall_start)

    def mean_shift(self) -> np.ndarray:
        """(steps, features) shift of the clean class mean over the infested one."""
        shift = np.zeros((self.n_steps, len(self.feature_names)))
        cols = [self.feature_names.index(f) for f in self.informative]
        shift[np.ix_(self.plateau_steps, cols)] = self.offsets * self.noise_sd
        return shift

    def base_profile(self) -> np.ndarray:
        prof = self.amplitude * trapezoid(self.step_u, self.rise_end, self.fall_start)
        return np.repeat(prof[:, None], len(self.feature_names), axis=1)


@dataclass
class SynthTruth:
    labels: np.ndarray
    params: dict
    extra: dict = field(default_factory=dict)


def gen_dataset(config: SynthConfig) -> tuple[Dataset, SynthTruth]:
    rng = np.random.default_rng(config.seed)
    n = 2 * config.n_pixels
    labels = np.repeat([1, 0], config.n_pixels)
    base = config.base_profile()
    x = base[None] + rng.normal(0.0, config.noise_sd, size=(n, *base.shape))
    x[labels == 0] += config.mean_shift()
    params = asdict(config)
    params["offsets"] = config.offsets.tolist()
    return Dataset(x, labels, list(config.feature_names)), SynthTruth(labels, params)


def _llr_gaussian(x, mu0, mu1, sd):
    """Log-likelihood ratio of class 0 (mean mu0) over class 1, summed over all but axis 0."""
    z = ((x - mu1) ** 2 - (x - mu0) ** 2) / (2 * sd * sd)
    return z.reshape(z.shape[0], -1).sum(axis=1)


def bayes_oracle(config: SynthConfig, n_samples=20000, seed=None) -> OracleEstimate:
    """Likelihood-ratio classifier accuracy under :func:`gen_dataset`'s model.

    Only the informative plateau entries differ between classes, so the
    ratio is evaluated on those; the rest cancel exactly.
    """
    rng = np.random.default_rng(config.seed + 1 if seed is None else seed)
    shift = config.mean_shift()
    sel = shift != 0
    delta = shift[sel]
    y = rng.integers(0, 2, size=n_samples)
    # residual around the infested mean on the informative entries
    x = rng.normal(0.0, config.noise_sd, size=(n_samples, delta.size)) + (y == 0)[:, None] * delta
    llr = _llr_gaussian(x, delta[None], np.zeros_like(delta)[None], config.noise_sd)
    pred = np.where(llr > 0, 0, 1)
    if delta.size == 0:
        pred = rng.integers(0, 2, size=n_samples)  # no information: fair coin
    hits = int((pred == y).sum())
    lo, hi = wilson_interval(hits, n_samples)
    closed = float(norm.cdf(np.sqrt((delta ** 2).sum()) / (2 * config.noise_sd)))
    return OracleEstimate(hits / n_samples, lo, hi, n_samples, closed)


# -- on-disk campaign -------------------------------------------------------------------

# bands:        B1    B2    B3    B4    B5    B6    B7    B8    B8A   B9    B11   B12
SOIL = np.array([0.10, 0.12, 0.15, 0.20, 0.23, 0.25, 0.27, 0.29, 0.30, 0.31, 0.36, 0.32])
CANOPY = np.array([0.03, 0.04, 0.08, 0.04, 0.10, 0.32, 0.45, 0.58, 0.60, 0.58, 0.22, 0.11])

# informative targets as base + slope * canopy_level; sd is the per-observation noise.
# A small sd keeps the class shift tiny in the bands that carry it, and slope / sd
# keeps the seasonal swing at a few sd so the shift stays visible after scaling
TARGETS = {
    "NDMI": dict(base=0.05, slope=0.08, sd=0.02, lo=-0.6, hi=0.8),
    "CHL_RED_EDGE": dict(base=1.0, slope=0.24, sd=0.06, lo=-0.4, hi=6.0),
    "CCC": dict(base=60.0, slope=32.0, sd=8.0, lo=15.0, hi=585.0),
    "FAPAR": dict(base=0.15, slope=0.06, sd=0.015, lo=0.03, hi=0.97),
}

# CCC spec: inputs (B8, B9); hidden tanh(CCC_GAIN * (B9 - B8) + CCC_BIAS)
CCC_GAIN, CCC_BIAS = 7.2, -1.12
# FAPAR spec: inputs (B8, B1); hidden tanh(B8n + 2 * B1n), B1n on [0, FAPAR_B1_MAX]
FAPAR_B1_MAX = 0.3
BRIGHTNESS_CLIP = (0.4, 2.0)


def _affine_spec(trait, names, lo, hi, w, b, out_w, out_b=0.0, out_range=None):
    vr = DEFAULT_VALID_RANGE[trait]
    out_lo, out_hi = out_range or vr
    w = np.atleast_2d(np.asarray(w, dtype=np.float64))
    return MlpSpec(trait, tuple(names), np.asarray(lo, dtype=float), np.asarray(hi, dtype=float),
                   (w,), (np.asarray(b, dtype=np.float64),),
                   np.atleast_2d(np.asarray(out_w, dtype=np.float64)),
                   np.array([out_b], dtype=np.float64), float(out_lo), float(out_hi), vr)


def synthetic_trait_specs() -> dict[TraitKind, MlpSpec]:
    """Hand-set networks; CCC and FAPAR are invertible in one band each."""
    g = CCC_GAIN / 2.0  # weights act on inputs normalized to [-1, 1]
    return {
        TraitKind.LAI: _affine_spec(
            TraitKind.LAI, ("B4", "B8", "cos_sun_zenith"), [0, 0, 0], [0.5, 1, 1],
            [[-2.0, 2.0, 0.2], [0.0, 1.0, 0.0]], [-1.0, 0.0], [[0.8, 0.15]], -0.1),
        TraitKind.CAB: _affine_spec(
            TraitKind.CAB, ("B3", "B5"), [0, 0], [0.4, 0.4],
            [[-3.0, -1.5]], [-2.0], [[0.6]], 0.35, out_range=(0.0, 200.0)),
        TraitKind.CCC: _affine_spec(
            TraitKind.CCC, ("B8", "B9"), [0, 0], [1, 1], [[-g, g]], [CCC_BIAS], [[1.0]]),
        TraitKind.FAPAR: _affine_spec(
            TraitKind.FAPAR, ("B8", "B1"), [0, 0], [1, FAPAR_B1_MAX], [[1.0, 2.0]], [0.0], [[1.0]]),
        TraitKind.FCOVER: _affine_spec(
            TraitKind.FCOVER, ("B3", "B4", "B8"), [0, 0, 0], [0.5, 0.5, 1],
            [[0.5, -3.0, 2.5]], [0.0], [[0.95]]),
    }


def solve_b9(b8, ccc):
    """B9 such that the synthetic CCC network returns ``ccc``."""
    y = np.asarray(ccc) / 300.0 - 1.0
    return b8 + (np.arctanh(y) - CCC_BIAS) / CCC_GAIN


def solve_b1(b8, fapar):
    """B1 such that the synthetic FAPAR network returns ``fapar``."""
    y = 2.0 * np.asarray(fapar) - 1.0
    b1n = (np.arctanh(y) - (2.0 * b8 - 1.0)) / 2.0
    return (b1n + 1.0) * FAPAR_B1_MAX / 2.0


@dataclass(frozen=True)
class CampaignConfig:
    n_pixels: int = 2000  # vegetation pixels per class
    fields_per_class: int = 5
    border: int = 2  # background margin around the planted block
    offset: float | tuple = 1.0  # clean-class shift in units of each target's sd
    informative: tuple = INFORMATIVE
    revisit_days: int = 5
    season_days: tuple = (95, 115)
    margin_days: int = 20  # scenes before transplant and after harvest
    cloudy_share: float = 0.2
    # log-normal illumination factor shared by all bands of a pixel and date.
    # Off by default: a shared factor lets a model cancel it across bands, and
    # shuffling one band then breaks that cancellation
    brightness_sd: float = 0.0
    # relative, independent per band; large against the few percent that a
    # one-sd target shift moves the bands it is written into
    band_noise: float = 0.2
    rise_end: float = 0.3
    fall_start: float = 0.7
    t_base: float = 10.0
    first_transplant: str = "2023-04-10"
    seed: int = 0

    def __post_init__(self):
        if self.n_pixels < self.fields_per_class or self.fields_per_class < 1:
            raise ConfigError("need at least one pixel per field and one field per class")
        unknown = set(self.informative) - set(TARGETS)
        if unknown:
            raise ConfigError(f"campaign can only shift {sorted(TARGETS)}, not {sorted(unknown)}")
        if not np.isfinite(self.offsets).all():
            raise ConfigError("offsets must be finite")
        if self.brightness_sd < 0 or self.band_noise < 0:
            raise ConfigError("noise levels must be non-negative")

    @property
    def offsets(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.offset, dtype=np.float64),
                               (len(self.informative),)).copy()

    @property
    def block_shape(self) -> tuple[int, int]:
        per_field = int(np.ceil(self.n_pixels / self.fields_per_class))
        h = int(np.floor(np.sqrt(per_field)))
        return h, int(np.ceil(per_field / h))


@dataclass
class FieldSpec:
    field_id: str
    label: str
    transplant: dt.date
    harvest: dt.date
    latitude: float
    longitude: float
    planted: np.ndarray  # bool (height, width), vegetation block
    seed: int  # pixel noise
    design_seed: int  # weather, dates, clouds and geometry; shared by a field pair


@dataclass
class CampaignTruth:
    config: dict
    fields: list[dict]  # per-field id, label, planted pixel count, scene design
    registry: Path

    def to_json(self) -> dict:
        return {"config": self.config, "fields": self.fields, "registry": self.registry.name}

    @classmethod
    def load(cls, path) -> "CampaignTruth":
        path = Path(path)
        doc = json.loads(path.read_text())
        return cls(doc["config"], doc["fields"], path.parent.parent / doc["registry"])

    def planted_mask(self, field_id) -> np.ndarray:
        root = self.registry.parent
        with np.load(root / "truth" / f"{field_id}_planted.npz") as z:
            return z["planted"]


def synth_weather(start: dt.date, n_days: int, rng) -> WeatherSeries:
    """Warm-season daily temperatures, annual cycle plus day-to-day noise."""
    dates = np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + n_days)
    doy = (dates - dates.astype("datetime64[Y]")).astype(int)
    mean = 20.0 + 7.0 * np.sin(2 * np.pi * (doy - 110) / 365.0) + rng.normal(0, 2.0, n_days)
    rng_d = np.abs(rng.normal(11.0, 2.0, n_days)) + 2.0
    return WeatherSeries(dates, np.round(mean - rng_d / 2, 2), np.round(mean + rng_d / 2, 2))


def _season_fraction(weather: WeatherSeries, transplant, harvest, t_base):
    """GDD fraction of the season for every weather day (0 before, >1 after)."""
    daily = daily_gdd(weather.t_max, weather.t_min, t_base)
    cum = np.concatenate([[0.0], np.cumsum(daily)[:-1]])
    t_i = int(np.flatnonzero(weather.dates == np.datetime64(transplant, "D"))[0])
    h_i = int(np.flatnonzero(weather.dates == np.datetime64(harvest, "D"))[0])
    cum = cum - cum[t_i]
    return cum / cum[h_i]


def _targets(kind, level, shift, noise):
    t = TARGETS[kind]
    value = t["base"] + t["slope"] * level + shift * t["sd"] + noise * t["sd"]
    return np.clip(value, t["lo"], t["hi"])


def _render_scene(spec: FieldSpec, cfg: CampaignConfig, level, plateau, cloud, rng):
    """Reflectance (12, h, w) for one date given the canopy level map."""
    h, w = spec.planted.shape
    n = h * w
    lv = level.ravel()
    r = (1.0 - lv)[None] * SOIL[:, None] + lv[None] * CANOPY[:, None]
    bright = np.clip(np.exp(rng.normal(0.0, cfg.brightness_sd, n)), *BRIGHTNESS_CLIP)
    r = r * bright[None] * (1.0 + cfg.band_noise * rng.normal(size=(12, n)))
    r = np.clip(r, 0.005, None)
    b = {name: r[i] for name, i in BAND_INDEX.items()}

    clean = spec.label == "clean"
    veg = spec.planted.ravel()
    shift = {k: np.zeros(n) for k in TARGETS}
    if clean and plateau:
        for k, off in zip(cfg.informative, cfg.offsets):
            shift[k] = np.where(veg, off, 0.0)
    noise = {k: rng.normal(size=n) for k in TARGETS}
    tgt = {k: _targets(k, lv, shift[k], noise[k]) for k in TARGETS}

    # class-independent ratios taken from the unmodified mixture
    mi = (b["B8A"] - b["B11"]) / (b["B8A"] + b["B11"])
    q = np.clip(0.5 + 0.1 * lv + rng.normal(0, 0.05, n), 0.3, 0.9)

    n_ = tgt["NDMI"]
    b["B11"] = b["B8"] * (1 - n_) / (1 + n_)
    b["B8A"] = b["B11"] * (1 + mi) / (1 - mi)
    b["B7"] = b["B5"] * (1 + tgt["CHL_RED_EDGE"])
    b["B6"] = b["B5"] + ((b["B4"] + b["B7"]) / 2 - b["B5"]) / q
    b["B9"] = solve_b9(b["B8"], tgt["CCC"])
    b["B1"] = solve_b1(b["B8"], tgt["FAPAR"])
    out = np.stack([b[name] for name in BAND_INDEX]).reshape(12, h, w)
    if cloud >= 0.1:
        out = out + 0.4 * cloud  # haze; these scenes are filtered downstream
    return out


def gen_scene_series(spec: FieldSpec, config: CampaignConfig, out_dir) -> dict:
    """Write one field's scenes and weather CSV; return its observation design."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(spec.design_seed)
    pixel_rng = np.random.default_rng(spec.seed)
    start = spec.transplant - dt.timedelta(days=config.margin_days + 5)
    end = spec.harvest + dt.timedelta(days=config.margin_days + 5)
    weather = synth_weather(start, (end - start).days + 1, rng)
    weather_path = out_dir / "weather" / f"{spec.field_id}.csv"
    weather_path.parent.mkdir(parents=True, exist_ok=True)
    write_weather_csv(weather, weather_path)
    frac = _season_fraction(weather, spec.transplant, spec.harvest, config.t_base)

    first = spec.transplant - dt.timedelta(days=config.margin_days - int(rng.integers(0, config.revisit_days)))
    dates = []
    d = first
    while d <= spec.harvest + dt.timedelta(days=config.margin_days):
        dates.append(d)
        d += dt.timedelta(days=config.revisit_days)

    design = []
    h, w = spec.planted.shape
    scene_root = out_dir / "scenes" / spec.field_id
    for k, day in enumerate(dates):
        cloudy = rng.random() < config.cloudy_share
        cloud = float(np.round(rng.uniform(0.1, 0.6) if cloudy else rng.uniform(0.0, 0.08), 4))
        u = float(frac[int((np.datetime64(day, "D") - weather.dates[0]).astype(int))])
        in_season = spec.transplant <= day <= spec.harvest
        level = float(trapezoid(u, config.rise_end, config.fall_start)) if in_season else 0.0
        plateau = bool(in_season and plateau_mask(u, config.rise_end, config.fall_start))
        level_map = np.where(spec.planted, level, 0.0)
        refl = _render_scene(spec, config, level_map, plateau, cloud, pixel_rng)
        meta = SceneMeta(
            acquisition_date=day,
            cloud_fraction=cloud,
            sun_zenith=float(np.round(25.0 + 15.0 * np.cos(2 * np.pi * (day.timetuple().tm_yday - 172) / 365.0) ** 2, 3)),
            sun_azimuth=float(np.round(rng.uniform(140, 160), 3)),
            view_zenith=float(np.round(rng.uniform(0, 10), 3)),
            view_azimuth=float(np.round(rng.uniform(95, 115), 3)),
            width=w, height=h)
        write_scene(Scene.from_reflectance(meta, refl), scene_root / day.isoformat())
        design.append({"date": day.isoformat(), "cloud_fraction": cloud, "season_fraction": u,
                       "canopy_level": level, "plateau": plateau, "clear": cloud < 0.1})
    return {"weather": weather_path, "scene_dir": scene_root, "design": design}


def gen_campaign(config: CampaignConfig, out_dir) -> CampaignTruth:
    """Write ``fields.json``, scenes, weather, trait specs and ground truth under ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "truth").mkdir(exist_ok=True)
        (out / "mlp").mkdir(exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot write campaign to {out}: {exc}", code="unwritable") from exc
    rng = np.random.default_rng(config.seed)
    for trait, spec in synthetic_trait_specs().items():
        save_mlp(spec, out / "mlp" / f"{trait.name.lower()}.json")

    bh, bw = config.block_shape
    h, w = bh + 2 * config.border, bw + 2 * config.border
    per_field = [config.n_pixels // config.fields_per_class] * config.fields_per_class
    for i in range(config.n_pixels % config.fields_per_class):
        per_field[i] += 1
    t0 = dt.date.fromisoformat(config.first_transplant)
    # each infested field has a clean twin observed under the same design, so
    # nothing but the injected offset separates the classes
    pairs = []
    for _ in per_field:
        transplant = t0 + dt.timedelta(days=int(rng.integers(0, 21)))
        harvest = transplant + dt.timedelta(days=int(rng.integers(*config.season_days)))
        pairs.append((transplant, harvest, float(np.round(rng.uniform(36, 42), 3)),
                      float(np.round(rng.uniform(-8, -2), 3)), int(rng.integers(2**31))))
    records, fields = [], []
    for label in ("infested", "clean"):
        for i, n_veg in enumerate(per_field):
            fid = f"{label[:3]}{i:02d}"
            planted = np.zeros((h, w), dtype=bool)
            block = np.zeros(bh * bw, dtype=bool)
            block[:n_veg] = True
            planted[config.border:config.border + bh, config.border:config.border + bw] = \
                block.reshape(bh, bw)
            transplant, harvest, lat, lon, design_seed = pairs[i]
            spec = FieldSpec(fid, label, transplant, harvest, lat, lon, planted,
                             int(rng.integers(2**31)), design_seed)
            series = gen_scene_series(spec, config, out)
            np.savez(out / "truth" / f"{fid}_planted.npz", planted=planted)
            records.append(FieldRecord(fid, label, transplant, harvest, series["scene_dir"],
                                       series["weather"], spec.latitude, spec.longitude))
            fields.append({"field_id": fid, "label": label, "planted_pixels": int(planted.sum()),
                           "transplant_date": transplant.isoformat(),
                           "harvest_date": harvest.isoformat(), "design": series["design"]})
    registry = write_fields(records, out / "fields.json")
    params = asdict(config)
    params["offsets"] = config.offsets.tolist()
    params["targets"] = TARGETS
    truth = CampaignTruth(params, fields, registry)
    (out / "truth" / "truth.json").write_text(json.dumps(truth.to_json(), indent=1))
    return truth


def campaign_oracle(truth: CampaignTruth, n_samples=20000, seed=0) -> OracleEstimate:
    """Likelihood-ratio accuracy for a vegetation pixel of the campaign.

    Given the targets, every band is a class-independent transform, so the
    optimal classifier only needs the shifted targets on the clear plateau
    acquisitions: each contributes ``offset`` standardized units per
    informative feature. Pixels are drawn in proportion to field size.
    """
    rng = np.random.default_rng(seed)
    offsets = np.asarray(truth.config["offsets"], dtype=np.float64)
    sizes = np.array([f["planted_pixels"] for f in truth.fields], dtype=float)
    n_obs = np.array([sum(d["plateau"] and d["clear"] for d in f["design"]) for f in truth.fields])
    pick = rng.choice(len(truth.fields), size=n_samples, p=sizes / sizes.sum())
    y = rng.integers(0, 2, size=n_samples)
    hits = 0
    for k in np.unique(pick):
        rows = pick == k
        delta = np.tile(offsets, n_obs[k])
        if delta.size == 0:
            hits += int((rng.integers(0, 2, rows.sum()) == y[rows]).sum())
            continue
        x = rng.normal(size=(rows.sum(), delta.size)) + (y[rows] == 0)[:, None] * delta
        llr = _llr_gaussian(x, delta[None], np.zeros_like(delta)[None], 1.0)
        hits += int((np.where(llr > 0, 0, 1) == y[rows]).sum())
    lo, hi = wilson_interval(hits, n_samples)
    closed = float(np.sum(sizes / sizes.sum()
                          * norm.cdf(np.sqrt(n_obs * (offsets ** 2).sum()) / 2.0)))
    return OracleEstimate(hits / n_samples, lo, hi, n_samples, closed)
