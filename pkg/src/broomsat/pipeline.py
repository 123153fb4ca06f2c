"""Stage runner: every stage reads files, writes files and a manifest.

Layout under the output directory::

    ingest/catalog.json, ingest/weather/<field>.csv
    indices/<field>/<date>.npz        values (20, H, W), valid
    traits/<field>/<date>.npz         values (5, H, W), valid, plausible
    align/<field>/stages.json, align/<field>/gdd.csv
    mask/<field>.pgm, mask/<field>_stack.npz, mask/dataset.npz
    train/model.ckpt, scaler.json, split.npz, cv.json, history.json
    evaluate/predictions.csv, evaluate/metrics.json
    importance/importance.npz
    report/...                         see broomsat.report

``<stage>/manifest.json`` records a hash over the stage parameters and the
content of every file the stage reads. A stage whose stored hash matches
and whose outputs are intact is skipped.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import synth
from .analysis import (ConfusionMatrix, ImportanceReport, confusion, kde, metrics,
                       permutation_importance)
from .errors import BroomsatError, ConfigError, DataError
from .indices import IndexKind, compute_all
from .lstm import (CrossValidation, Dataset, LstmConfig, Standardizer, TrainConfig,
                   TrainedModel, cross_validate, load_checkpoint, save_checkpoint)
from .masking import vegetation_mask, write_mask_pgm
from .phenology import (FEATURE_NAMES, AlignedStack, FeatureCube, StageEstimate,
                        assemble_feature_stack, cumulative_gdd, detect_stages, load_stages,
                        save_stages)
from .report import RunArtifacts, emit_report
from .scene_store import filter_clear, load_fields, load_scene, load_scene_series
from .traits import TraitKind, infer_traits_plane, load_mlp
from .weather import CACHE_ENV, WeatherSeries, fetch_weather, read_weather_csv, write_weather_csv

log = logging.getLogger("broomsat")

FORMAT_VERSION = 1
STAGES = ["ingest", "indices", "traits", "align", "mask", "train", "evaluate", "importance",
          "report"]

DEFAULTS = {
    "paths.registry": None,
    "paths.mlp_dir": None,
    "paths.campaign": None,
    "weather.cache_dir": None,
    "scenes.max_cloud": 0.10,
    "phenology.t_base": 10.0,
    "phenology.theta_low": 0.2,
    "phenology.theta_high": 0.5,
    "phenology.smoothing_window": 3,
    "phenology.n_steps": 48,
    # "registry": reported transplant/harvest with the detected peak; "detected": all detected
    "phenology.stage_source": "registry",
    "masking.variance_target": 0.95,
    "masking.max_iter": 100,
    "lstm.lstm_units": [64, 32],
    "lstm.dropout_rate": 0.2,
    "lstm.dense_units": 32,
    "train.epochs": 100,
    "train.folds": 5,
    "train.test_fraction": 0.30,
    "train.learning_rate": 1e-3,
    "train.batch_size": 64,
    "train.early_stopping_patience": None,
    "train.precision": "float32",
    "importance.repeats": 10,
    "importance.split": "test",
    "report.density_features": ["NDMI", "CCC", "FAPAR", "CHL_RED_EDGE"],
    "report.grid_size": 256,
    "seed": 0,
}
DEFAULTS.update({f"synth.{f.name}": f.default for f in fields(synth.CampaignConfig)
                 if f.name != "seed"})
PATH_KEYS = ("paths.registry", "paths.mlp_dir", "paths.campaign", "weather.cache_dir")


@dataclass
class RunConfig:
    values: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path=None, overrides=None) -> "RunConfig":
        doc, base = {}, Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file {path} not found")
            try:
                doc = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
            if not isinstance(doc, dict):
                raise ConfigError(f"{path}: top level must be an object of dotted keys")
            base = path.resolve().parent
        unknown = sorted(set(doc) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        values = {**DEFAULTS, **doc, **(overrides or {})}
        cfg = cls(values, base)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    def path(self, key) -> Path | None:
        v = self.values[key]
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p

    def section(self, prefix) -> dict:
        return {k: v for k, v in sorted(self.values.items()) if k.startswith(prefix)}

    def validate(self):
        v = self.values
        try:
            if not 0.0 <= float(v["scenes.max_cloud"]) <= 1.0:
                raise ValueError("scenes.max_cloud must lie in [0, 1]")
            if not 0.0 < float(v["phenology.theta_low"]) < float(v["phenology.theta_high"]) < 1.0:
                raise ValueError("need 0 < phenology.theta_low < phenology.theta_high < 1")
            if not 0.0 < float(v["masking.variance_target"]) <= 1.0:
                raise ValueError("masking.variance_target must lie in (0, 1]")
            if v["phenology.stage_source"] not in ("registry", "detected"):
                raise ValueError("phenology.stage_source must be 'registry' or 'detected'")
            if v["importance.split"] not in ("test", "train"):
                raise ValueError("importance.split must be 'test' or 'train'")
            if int(v["importance.repeats"]) < 1:
                raise ValueError("importance.repeats must be >= 1")
            if int(v["phenology.n_steps"]) < 2:
                raise ValueError("phenology.n_steps must be >= 2")
            self.lstm_config()
            self.train_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def lstm_config(self) -> LstmConfig:
        v = self.values
        return LstmConfig(input_size=len(FEATURE_NAMES), lstm_units=tuple(v["lstm.lstm_units"]),
                          dropout_rate=float(v["lstm.dropout_rate"]),
                          dense_units=v["lstm.dense_units"],
                          sequence_length=int(v["phenology.n_steps"]))

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(epochs=int(v["train.epochs"]), folds=int(v["train.folds"]),
                           test_fraction=float(v["train.test_fraction"]),
                           learning_rate=float(v["train.learning_rate"]),
                           batch_size=int(v["train.batch_size"]), seed=int(v["seed"]),
                           early_stopping_patience=v["train.early_stopping_patience"],
                           precision=v["train.precision"])

    def campaign_config(self) -> synth.CampaignConfig:
        kw = {k[len("synth."):]: val for k, val in self.values.items() if k.startswith("synth.")}
        for k in ("season_days", "informative"):
            kw[k] = tuple(kw[k])
        if isinstance(kw["offset"], list):
            kw["offset"] = tuple(kw["offset"])
        return synth.CampaignConfig(**kw, seed=int(self.values["seed"]))


# -- manifests ---------------------------------------------------------------------

def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def inputs_hash(stage, params: dict, deps) -> str:
    h = hashlib.sha256()
    h.update(json.dumps({"stage": stage, "version": FORMAT_VERSION, "params": params},
                        sort_keys=True, default=str).encode())
    for p in sorted(str(d) for d in deps):
        h.update(p.encode())
        h.update(file_digest(p).encode())
    return h.hexdigest()


def _manifest_ok(path: Path, digest: str) -> bool:
    if not path.is_file():
        return False
    try:
        doc = json.loads(path.read_text())
        if doc.get("inputs_hash") != digest:
            return False
        root = path.parent
        return all((root / o["path"]).is_file() and file_digest(root / o["path"]) == o["sha256"]
                   for o in doc["outputs"])
    except (ValueError, KeyError, OSError):
        return False


@dataclass
class StageResult:
    stage: str
    skipped: bool
    outputs: list[Path]


class Pipeline:
    def __init__(self, config: RunConfig, out_dir, force=False):
        self.cfg = config
        self.out = Path(out_dir)
        self.force = force

    def dir(self, stage) -> Path:
        return self.out / stage

    # each stage: (parameter section prefixes, dependency lister, runner)
    def _spec(self, stage):
        return {
            "ingest": (("paths.registry", "scenes.", "weather."), self._deps_ingest, self._ingest),
            "indices": ((), self._deps_catalog, self._indices),
            "traits": (("paths.mlp_dir",), self._deps_traits, self._traits),
            "align": (("phenology.",), self._deps_align, self._align),
            "mask": (("masking.", "phenology.n_steps"), self._deps_mask, self._mask),
            "train": (("lstm.", "train.", "seed"), self._deps_train, self._train),
            "evaluate": ((), self._deps_evaluate, self._evaluate),
            "importance": (("importance.", "seed"), self._deps_evaluate, self._importance),
            "report": (("report.",), self._deps_report, self._report),
        }[stage]

    def run(self, stage) -> StageResult:
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}")
        try:
            return self._run(stage)
        except BroomsatError as exc:
            exc.args = (f"[{stage}] {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            raise

    def _run(self, stage) -> StageResult:
        prefixes, deps_fn, runner = self._spec(stage)
        params = {k: v for k, v in self.cfg.values.items()
                  if any(k == p or (p.endswith(".") and k.startswith(p)) for p in prefixes)}
        params = {k: (str(self.cfg.path(k)) if k in PATH_KEYS else v) for k, v in params.items()}
        deps = deps_fn()
        digest = inputs_hash(stage, params, deps)
        root = self.dir(stage)
        manifest = root / "manifest.json"
        if not self.force and _manifest_ok(manifest, digest):
            log.info("%s: inputs unchanged, skipping", stage)
            doc = json.loads(manifest.read_text())
            return StageResult(stage, True, [root / o["path"] for o in doc["outputs"]])
        log.info("%s: running", stage)
        root.mkdir(parents=True, exist_ok=True)
        if manifest.exists():
            manifest.unlink()
        outputs = runner()
        doc = {
            "stage": stage,
            "format_version": FORMAT_VERSION,
            "inputs_hash": digest,
            "params": params,
            "inputs": sorted(str(d) for d in deps),
            "outputs": [{"path": p.relative_to(root).as_posix(), "sha256": file_digest(p)}
                        for p in sorted(outputs)],
        }
        manifest.write_text(json.dumps(doc, indent=1, default=str))
        return StageResult(stage, False, outputs)

    def run_all(self, stages=STAGES) -> list[StageResult]:
        return [self.run(s) for s in stages]

    # -- helpers ----------------------------------------------------------------

    def _records(self):
        reg = self.cfg.path("paths.registry")
        if reg is None:
            raise ConfigError("paths.registry is not set")
        return load_fields(reg)

    def _catalog(self) -> dict:
        path = self.dir("ingest") / "catalog.json"
        if not path.is_file():
            raise DataError(f"{path} missing; run the ingest stage first", code="missing_stage")
        return json.loads(path.read_text())

    def _stage_files(self, stage, pattern="**/*") -> list[Path]:
        root = self.dir(stage)
        if not (root / "manifest.json").is_file():
            raise DataError(f"stage {stage} has not completed under {self.out}",
                            code="missing_stage")
        doc = json.loads((root / "manifest.json").read_text())
        return [root / o["path"] for o in doc["outputs"] if Path(o["path"]).match(pattern)]

    # -- ingest -------------------------------------------------------------------

    def _deps_ingest(self):
        reg = self.cfg.path("paths.registry")
        if reg is None:
            raise ConfigError("paths.registry is not set")
        deps = [reg]
        for rec in self._records():
            if not rec.scene_dir.is_dir():
                raise ConfigError(f"field {rec.field_id}: scene directory {rec.scene_dir} not found")
            for bundle in sorted(rec.scene_dir.iterdir()):
                deps += [p for p in (bundle / "meta.json", bundle / "bands.bin") if p.is_file()]
            if isinstance(rec.weather_ref, Path):
                if not rec.weather_ref.is_file():
                    raise ConfigError(f"field {rec.field_id}: weather file {rec.weather_ref} not found")
                deps.append(rec.weather_ref)
        return deps

    def _weather_for(self, rec) -> WeatherSeries:
        if isinstance(rec.weather_ref, Path):
            return read_weather_csv(rec.weather_ref)
        lat = rec.weather_ref.get("latitude", rec.latitude)
        lon = rec.weather_ref.get("longitude", rec.longitude)
        if lat is None or lon is None:
            raise ConfigError(f"field {rec.field_id}: weather_ref needs latitude and longitude")
        cache = self.cfg.path("weather.cache_dir")
        if cache is None:
            cache = os.environ.get(CACHE_ENV) or self.out / "weather_cache"
        return fetch_weather(float(lat), float(lon), rec.transplant_date, rec.harvest_date,
                             cache_dir=cache)

    def _ingest(self):
        root = self.dir("ingest")
        (root / "weather").mkdir(parents=True, exist_ok=True)
        max_cloud = float(self.cfg["scenes.max_cloud"])
        catalog, outputs = {"max_cloud": max_cloud, "fields": []}, []
        for rec in self._records():
            scenes = load_scene_series(rec.scene_dir)
            clear = filter_clear(scenes, max_cloud)
            if len(clear) < 5:
                raise DataError(f"field {rec.field_id}: only {len(clear)} clear scenes", code="no_scenes")
            weather = self._weather_for(rec)
            wpath = write_weather_csv(weather, root / "weather" / f"{rec.field_id}.csv")
            outputs.append(wpath)
            by_date = {}
            for p in sorted(rec.scene_dir.iterdir()):
                if (p / "meta.json").is_file():
                    meta = json.loads((p / "meta.json").read_text())
                    by_date.setdefault(meta["acquisition_date"], p)
            catalog["fields"].append({
                "field_id": rec.field_id,
                "label": rec.label,
                "transplant_date": rec.transplant_date.isoformat(),
                "harvest_date": rec.harvest_date.isoformat(),
                "n_scenes": len(scenes),
                "clear": [{"date": s.date.isoformat(), "bundle": str(by_date[s.date.isoformat()]),
                           "cloud_fraction": s.meta.cloud_fraction,
                           "sha256": file_digest(by_date[s.date.isoformat()] / "bands.bin")}
                          for s in clear],
                "weather": wpath.name,
            })
        path = root / "catalog.json"
        path.write_text(json.dumps(catalog, indent=1))
        return [path] + outputs

    # -- indices / traits ---------------------------------------------------------

    def _deps_catalog(self):
        return self._stage_files("ingest", "catalog.json")

    def _indices(self):
        outputs = []
        for f in self._catalog()["fields"]:
            d = self.dir("indices") / f["field_id"]
            d.mkdir(parents=True, exist_ok=True)
            for entry in f["clear"]:
                planes = compute_all(load_scene(entry["bundle"]))
                path = d / f"{entry['date']}.npz"
                np.savez(path, values=np.stack([p.values for p in planes]),
                         valid=np.stack([p.valid for p in planes]),
                         names=np.array([k.acronym for k in IndexKind]))
                outputs.append(path)
        return outputs

    def _mlp_files(self):
        mdir = self.cfg.path("paths.mlp_dir")
        if mdir is None or not mdir.is_dir():
            raise ConfigError(f"paths.mlp_dir {mdir} is not a directory")
        files = sorted(mdir.glob("*.json"))
        if not files:
            raise ConfigError(f"no trait network files in {mdir}")
        return files

    def _deps_traits(self):
        return self._deps_catalog() + self._mlp_files()

    def _traits(self):
        specs = [load_mlp(p) for p in self._mlp_files()]
        outputs = []
        for f in self._catalog()["fields"]:
            d = self.dir("traits") / f["field_id"]
            d.mkdir(parents=True, exist_ok=True)
            for entry in f["clear"]:
                planes = infer_traits_plane(load_scene(entry["bundle"]), specs)
                path = d / f"{entry['date']}.npz"
                np.savez(path, values=np.stack([p.values for p in planes]),
                         valid=np.stack([p.valid for p in planes]),
                         plausible=np.stack([p.plausible for p in planes]),
                         names=np.array([t.name for t in TraitKind]))
                outputs.append(path)
        return outputs

    # -- align --------------------------------------------------------------------

    def _deps_align(self):
        return (self._deps_catalog() + self._stage_files("ingest", "weather/*.csv")
                + self._stage_files("traits", "*.npz"))

    def _field_ccc_series(self, f):
        ccc_i = list(TraitKind).index(TraitKind.CCC)
        series = []
        for entry in f["clear"]:
            with np.load(self.dir("traits") / f["field_id"] / f"{entry['date']}.npz") as z:
                v, ok = z["values"][ccc_i], z["valid"][ccc_i]
            if ok.any():
                series.append((dt.date.fromisoformat(entry["date"]), float(np.median(v[ok]))))
        return series

    def _align(self):
        cfg = self.cfg
        outputs = []
        for f in self._catalog()["fields"]:
            fid = f["field_id"]
            d = self.dir("align") / fid
            d.mkdir(parents=True, exist_ok=True)
            weather = read_weather_csv(self.dir("ingest") / "weather" / f["weather"])
            series = self._field_ccc_series(f)
            transplant = dt.date.fromisoformat(f["transplant_date"])
            harvest = dt.date.fromisoformat(f["harvest_date"])
            try:
                detected = detect_stages(series, float(cfg["phenology.theta_low"]),
                                         float(cfg["phenology.theta_high"]),
                                         int(cfg["phenology.smoothing_window"]))
            except DataError as exc:
                log.warning("field %s: stage detection failed (%s)", fid, exc)
                detected = None
            if cfg["phenology.stage_source"] == "detected":
                if detected is None:
                    raise DataError(f"field {fid}: stages could not be detected", code="stages")
                used = detected
            else:
                peak = detected.peak_date if detected else None
                if peak is None or not transplant < peak < harvest:
                    inside = [(v, dd) for dd, v in series if transplant < dd < harvest]
                    if not inside:
                        raise DataError(f"field {fid}: no clear scene inside the season",
                                        code="stages")
                    peak = max(inside, key=lambda t: (t[0], -t[1].toordinal()))[1]
                used = StageEstimate(transplant, peak, harvest)
            curve = cumulative_gdd(weather, used.transplant_date, used.harvest_date,
                                   float(cfg["phenology.t_base"]))
            used = used.with_gdd(curve)
            if detected is not None and curve.covers(detected.transplant_date) \
                    and curve.covers(detected.harvest_date):
                detected = detected.with_gdd(curve)
            spath = d / "stages.json"
            save_stages(spath, detected, used)
            gpath = d / "gdd.csv"
            with open(gpath, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["date", "cumulative_gdd"])
                for day, g in zip(curve.dates, curve.cumulative):
                    w.writerow([str(day), repr(float(g))])
            outputs += [spath, gpath]
        return outputs

    # -- mask + feature assembly ----------------------------------------------------

    def _deps_mask(self):
        return (self._deps_catalog() + self._stage_files("align")
                + self._stage_files("indices", "*.npz") + self._stage_files("traits", "*.npz"))

    def _cube(self, fid, entry) -> FeatureCube:
        scene = load_scene(entry["bundle"])
        with np.load(self.dir("indices") / fid / f"{entry['date']}.npz") as zi, \
                np.load(self.dir("traits") / fid / f"{entry['date']}.npz") as zt:
            values = np.concatenate([scene.planes, zi["values"], zt["values"]])
            valid = np.concatenate([scene.valid, zi["valid"], zt["valid"]])
        return FeatureCube(dt.date.fromisoformat(entry["date"]), values, valid)

    def _mask(self):
        cfg = self.cfg
        root = self.dir("mask")
        outputs, stacks = [], []
        for f in self._catalog()["fields"]:
            fid = f["field_id"]
            _, used = load_stages(self.dir("align") / fid / "stages.json")
            weather = read_weather_csv(self.dir("ingest") / "weather" / f["weather"])
            curve = cumulative_gdd(weather, used.transplant_date, used.harvest_date,
                                   float(cfg["phenology.t_base"]))
            # trait planes at the clear acquisition nearest the peak
            nearest = min(f["clear"], key=lambda e: (abs((dt.date.fromisoformat(e["date"])
                                                          - used.peak_date).days), e["date"]))
            with np.load(self.dir("traits") / fid / f"{nearest['date']}.npz") as z:
                planes = list(zip(z["values"], z["valid"]))
            vm = vegetation_mask(planes, float(cfg["masking.variance_target"]),
                                 seed=int(cfg["seed"]), max_iter=int(cfg["masking.max_iter"]))
            mpath = root / f"{fid}.pgm"
            write_mask_pgm(vm, mpath)
            record = _RecordView(fid, f["label"])
            cubes = [self._cube(fid, e) for e in f["clear"]]
            stack = assemble_feature_stack(record, cubes, vm.mask, curve, used,
                                           n_steps=int(cfg["phenology.n_steps"]))
            spath = root / f"{fid}_stack.npz"
            stack.save(spath)
            stacks.append(stack)
            outputs += [mpath, spath]
        dpath = root / "dataset.npz"
        np.savez(dpath,
                 inputs=np.concatenate([s.data.transpose(0, 2, 1) for s in stacks]),
                 labels=np.concatenate([s.labels for s in stacks]),
                 field_ids=np.concatenate([np.full(s.labels.size, s.field_id) for s in stacks]),
                 pixel_ids=np.concatenate([s.pixel_ids for s in stacks]),
                 peak_step=np.concatenate([np.full(s.labels.size, s.peak_step) for s in stacks]),
                 feature_names=np.array(FEATURE_NAMES))
        return outputs + [dpath]

    # -- train / evaluate / importance ------------------------------------------------

    def _dataset_path(self):
        return self._stage_files("mask", "dataset.npz")[0]

    def load_dataset(self):
        with np.load(self._dataset_path()) as z:
            ds = Dataset(z["inputs"], z["labels"], [str(s) for s in z["feature_names"]])
            extra = {k: z[k] for k in ("field_ids", "pixel_ids", "peak_step")}
        return ds, extra

    def _deps_train(self):
        return [self._dataset_path()]

    def _train(self):
        root = self.dir("train")
        ds, _ = self.load_dataset()
        cv: CrossValidation = cross_validate(ds, self.cfg.lstm_config(), self.cfg.train_config(),
                                             log=log.debug)
        ckpt = root / "model.ckpt"
        save_checkpoint(cv.model.params, cv.model.config, ckpt,
                        extra={"precision": self.cfg["train.precision"]})
        scaler = root / "scaler.json"
        scaler.write_text(json.dumps(cv.model.scaler.to_dict()))
        split = root / "split.npz"
        np.savez(split, test_idx=cv.test_idx, **{f"fold{k}": f for k, f in enumerate(cv.folds)})
        cvp = root / "cv.json"
        cvp.write_text(json.dumps({"folds": cv.fold_metrics, "test": cv.test_metrics,
                                   "final_history": cv.history}, indent=1))
        # learning curves: fold-averaged training and validation metrics
        hist = {k: np.mean([h[k] for h in cv.fold_histories], axis=0).tolist()
                for k in ("loss", "accuracy", "val_loss", "val_accuracy")}
        hpath = root / "history.json"
        hpath.write_text(json.dumps(hist))
        return [ckpt, scaler, split, cvp, hpath]

    def load_model(self) -> TrainedModel:
        root = self.dir("train")
        params, config, extra = load_checkpoint(root / "model.ckpt")
        dtype = np.dtype(extra.get("precision", "float64"))
        params = {k: v.astype(dtype) for k, v in params.items()}
        scaler = Standardizer.from_dict(json.loads((root / "scaler.json").read_text()))
        return TrainedModel(params, config, scaler)

    def _deps_evaluate(self):
        return [self._dataset_path()] + self._stage_files("train")

    def _test_idx(self):
        with np.load(self.dir("train") / "split.npz") as z:
            return z["test_idx"]

    def _evaluate(self):
        root = self.dir("evaluate")
        ds, extra = self.load_dataset()
        model = self.load_model()
        idx = self._test_idx()
        probs = model.predict_proba(ds.inputs[idx])
        preds = (probs >= 0.5).astype(int)
        ppath = root / "predictions.csv"
        with open(ppath, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample", "field_id", "pixel_id", "label", "probability", "prediction"])
            for i, p, q in zip(idx, probs, preds):
                w.writerow([int(i), str(extra["field_ids"][i]), int(extra["pixel_ids"][i]),
                            int(ds.labels[i]), repr(float(p)), int(q)])
        cm = confusion(ds.labels[idx], preds)
        m = metrics(cm)
        mpath = root / "metrics.json"
        mpath.write_text(json.dumps({"confusion": {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn,
                                                   "tn": cm.tn},
                                     "metrics": m.as_dict(), "n_test": int(idx.size)}, indent=1))
        return [ppath, mpath]

    def _importance(self):
        root = self.dir("importance")
        ds, _ = self.load_dataset()
        model = self.load_model()
        idx = self._test_idx()
        if self.cfg["importance.split"] == "train":
            idx = np.setdiff1d(np.arange(len(ds)), idx)
        rep = permutation_importance(model, ds.inputs[idx], ds.labels[idx],
                                     repeats=int(self.cfg["importance.repeats"]),
                                     seed=int(self.cfg["seed"]), feature_names=ds.feature_names)
        path = root / "importance.npz"
        np.savez(path, drops=rep.drops, baseline=np.array(rep.baseline_accuracy),
                 feature_names=np.array(rep.feature_names))
        return [path]

    # -- report ---------------------------------------------------------------------

    def _deps_report(self):
        return ([self._dataset_path()] + self._stage_files("train", "history.json")
                + self._stage_files("evaluate") + self._stage_files("importance"))

    def artifacts(self) -> RunArtifacts:
        ev = json.loads((self.dir("evaluate") / "metrics.json").read_text())
        cm = ConfusionMatrix(**ev["confusion"])
        hist = json.loads((self.dir("train") / "history.json").read_text())
        with np.load(self.dir("importance") / "importance.npz") as z:
            rep = ImportanceReport([str(s) for s in z["feature_names"]], float(z["baseline"]),
                                   z["drops"])
        ds, extra = self.load_dataset()
        curves = []
        rows = np.arange(len(ds))
        peak_vals = ds.inputs[rows, extra["peak_step"]]  # (N, features) at each field's peak
        for feat in self.cfg["report.density_features"]:
            if feat not in ds.feature_names:
                raise ConfigError(f"report.density_features: unknown feature {feat}")
            col = ds.feature_names.index(feat)
            for label, tag in ((1, "infested"), (0, "clean")):
                vals = peak_vals[ds.labels == label, col]
                if vals.size >= 2:
                    curves.append(kde(vals, tag, int(self.cfg["report.grid_size"]), feat))
        return RunArtifacts(metrics(cm), cm, hist, rep, curves)

    def _report(self):
        return emit_report(self.artifacts(), self.dir("report"))


@dataclass(frozen=True)
class _RecordView:
    """The two registry attributes feature assembly needs."""

    field_id: str
    label: str

    @property
    def is_infested(self):
        return self.label == "infested"


def run_synth(config: RunConfig, out_dir) -> synth.CampaignTruth:
    return synth.gen_campaign(config.campaign_config(), out_dir)
