"""Plant-trait estimation with small loadable tanh networks.

A spec file is JSON::

    {
      "trait": "CCC",
      "input_names": ["B8", "B9", "cos_sun_zenith"],
      "input_min": [...], "input_max": [...],
      "hidden_layers": [{"weights": [[...], ...], "biases": [...]}, ...],
      "output_layer": {"weights": [[...]], "biases": [b]},
      "output_min": 0.0, "output_max": 600.0,
      "valid_range": [0.0, 600.0]
    }

``weights`` of a layer with ``n`` neurons fed by ``m`` values is ``n`` rows
of ``m`` numbers. Inputs are mapped to [-1, 1] with the min/max pair, pass
through tanh hidden layers and a linear single-neuron output, and the
output is mapped back from [-1, 1] to [output_min, output_max].
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .scene_store import BAND_INDEX, BAND_NAMES, Geometry, Scene


class TraitKind(enum.Enum):
    LAI = "LAI"
    CAB = "CAB"
    CCC = "CCC"
    FAPAR = "FAPAR"
    FCOVER = "FCOVER"


TRAIT_NAMES = [t.name for t in TraitKind]
GEOMETRY_INPUTS = ("cos_view_zenith", "cos_sun_zenith", "cos_rel_azimuth")
ALLOWED_INPUTS = tuple(BAND_NAMES) + GEOMETRY_INPUTS

DEFAULT_VALID_RANGE = {
    TraitKind.LAI: (0.0, 8.0),
    TraitKind.CAB: (0.0, 600.0),
    TraitKind.CCC: (0.0, 600.0),
    TraitKind.FAPAR: (0.0, 1.0),
    TraitKind.FCOVER: (0.0, 1.0),
}


@dataclass(frozen=True, eq=False)
class MlpSpec:
    trait: TraitKind
    input_names: tuple[str, ...]
    input_min: np.ndarray
    input_max: np.ndarray
    hidden_weights: tuple[np.ndarray, ...]
    hidden_biases: tuple[np.ndarray, ...]
    output_weights: np.ndarray  # (1, last hidden size)
    output_bias: np.ndarray  # (1,)
    output_min: float
    output_max: float
    valid_range: tuple[float, float]

    def __post_init__(self):
        validate_spec(self)

    def __eq__(self, other):
        if not isinstance(other, MlpSpec):
            return NotImplemented
        return spec_to_json(self) == spec_to_json(other)


def validate_spec(spec: MlpSpec):
    n_in = len(spec.input_names)
    if n_in == 0:
        raise FormatError("spec needs at least one input", code="shape")
    unknown = [n for n in spec.input_names if n not in ALLOWED_INPUTS]
    if unknown:
        raise FormatError(f"unknown inputs {unknown}", code="inputs")
    if np.shape(spec.input_min) != (n_in,) or np.shape(spec.input_max) != (n_in,):
        raise FormatError("input_min/input_max must have one entry per input", code="shape")
    if not np.all(np.asarray(spec.input_min) < np.asarray(spec.input_max)):
        raise FormatError("input_min must be < input_max for every input", code="range")
    if not spec.output_min < spec.output_max:
        raise FormatError("output_min must be < output_max", code="range")
    if len(spec.hidden_weights) != len(spec.hidden_biases):
        raise FormatError("hidden weights and biases differ in count", code="shape")
    fan_in = n_in
    for k, (w, b) in enumerate(zip(spec.hidden_weights, spec.hidden_biases)):
        if w.ndim != 2 or w.shape[1] != fan_in:
            raise FormatError(f"hidden layer {k}: weights {w.shape} do not take {fan_in} inputs",
                              code="shape")
        if b.shape != (w.shape[0],):
            raise FormatError(f"hidden layer {k}: {b.shape[0]} biases for {w.shape[0]} neurons",
                              code="shape")
        fan_in = w.shape[0]
    if spec.output_weights.shape != (1, fan_in) or spec.output_bias.shape != (1,):
        raise FormatError(f"output layer must be (1, {fan_in}) weights and one bias", code="shape")


def spec_from_json(doc: dict) -> MlpSpec:
    try:
        trait = TraitKind[doc["trait"]]
        out = doc["output_layer"]
        return MlpSpec(
            trait=trait,
            input_names=tuple(doc["input_names"]),
            input_min=np.asarray(doc["input_min"], dtype=np.float64),
            input_max=np.asarray(doc["input_max"], dtype=np.float64),
            hidden_weights=tuple(np.atleast_2d(np.asarray(l["weights"], dtype=np.float64))
                                 for l in doc["hidden_layers"]),
            hidden_biases=tuple(np.atleast_1d(np.asarray(l["biases"], dtype=np.float64))
                                for l in doc["hidden_layers"]),
            output_weights=np.atleast_2d(np.asarray(out["weights"], dtype=np.float64)),
            output_bias=np.atleast_1d(np.asarray(out["biases"], dtype=np.float64)),
            output_min=float(doc["output_min"]),
            output_max=float(doc["output_max"]),
            valid_range=tuple(doc.get("valid_range", DEFAULT_VALID_RANGE[trait])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed trait spec: {exc}", code="malformed") from exc


def spec_to_json(spec: MlpSpec) -> dict:
    return {
        "trait": spec.trait.name,
        "input_names": list(spec.input_names),
        "input_min": spec.input_min.tolist(),
        "input_max": spec.input_max.tolist(),
        "hidden_layers": [{"weights": w.tolist(), "biases": b.tolist()}
                          for w, b in zip(spec.hidden_weights, spec.hidden_biases)],
        "output_layer": {"weights": spec.output_weights.tolist(),
                         "biases": spec.output_bias.tolist()},
        "output_min": spec.output_min,
        "output_max": spec.output_max,
        "valid_range": list(spec.valid_range),
    }


def load_mlp(path) -> MlpSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise FormatError(f"missing trait spec {path}", code="missing") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}", code="malformed") from exc
    return spec_from_json(doc)


def save_mlp(spec: MlpSpec, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(spec_to_json(spec), indent=1), encoding="utf-8")
    return path


def geometry_features(geometry: Geometry) -> dict[str, float]:
    g = geometry
    return {
        "cos_view_zenith": float(np.cos(np.radians(g.view_zenith))),
        "cos_sun_zenith": float(np.cos(np.radians(g.sun_zenith))),
        "cos_rel_azimuth": float(np.cos(np.radians(g.sun_azimuth - g.view_azimuth))),
    }


def normalize_inputs(spec: MlpSpec, x):
    return 2.0 * (x - spec.input_min) / (spec.input_max - spec.input_min) - 1.0


def denormalize_output(spec: MlpSpec, y):
    return (y + 1.0) * (spec.output_max - spec.output_min) / 2.0 + spec.output_min


def evaluate(spec: MlpSpec, inputs):
    """Network output for raw ``inputs`` of shape (n, len(input_names))."""
    a = normalize_inputs(spec, np.asarray(inputs, dtype=np.float64))
    for w, b in zip(spec.hidden_weights, spec.hidden_biases):
        a = np.tanh(a @ w.T + b)
    y = (a @ spec.output_weights.T + spec.output_bias)[:, 0]
    return denormalize_output(spec, y)


def _gather_inputs(spec, spectra, geometry):
    geo = geometry_features(geometry)
    n = spectra.shape[0]
    cols = [spectra[:, BAND_INDEX[name]] if name in BAND_INDEX else np.full(n, geo[name])
            for name in spec.input_names]
    return np.stack(cols, axis=1)


def infer_trait(spec: MlpSpec, spectrum, geometry: Geometry, valid=True):
    """Trait value for one 12-band spectrum.

    Returns ``(value, valid, plausible)``. An invalid or non-finite spectrum
    yields ``(nan, False, False)``.
    """
    spectrum = np.asarray(spectrum, dtype=np.float64).reshape(1, -1)
    if not valid or not np.isfinite(spectrum).all():
        return float("nan"), False, False
    value = float(evaluate(spec, _gather_inputs(spec, spectrum, geometry))[0])
    lo, hi = spec.valid_range
    return value, True, bool(lo <= value <= hi)


@dataclass(frozen=True, eq=False)
class TraitPlane:
    trait: TraitKind
    values: np.ndarray
    valid: np.ndarray
    plausible: np.ndarray


def _ordered_specs(specs) -> list[MlpSpec]:
    by_trait = {s.trait: s for s in (specs.values() if isinstance(specs, dict) else specs)}
    missing = [t.name for t in TraitKind if t not in by_trait]
    if missing:
        raise FormatError(f"missing trait specs for {missing}", code="missing")
    return [by_trait[t] for t in TraitKind]


def infer_traits_plane(scene: Scene, specs) -> list[TraitPlane]:
    """All five trait planes for a scene, in TraitKind order."""
    h, w = scene.meta.height, scene.meta.width
    valid = scene.pixel_valid
    spectra = scene.planes.reshape(12, -1).T[valid.ravel()]
    planes = []
    for spec in _ordered_specs(specs):
        values = np.full(h * w, np.nan)
        if spectra.shape[0]:
            values[valid.ravel()] = evaluate(spec, _gather_inputs(spec, spectra, scene.meta.geometry))
        values = values.reshape(h, w)
        lo, hi = spec.valid_range
        plausible = valid & (values >= lo) & (values <= hi)
        planes.append(TraitPlane(spec.trait, values, valid.copy(), plausible))
    return planes


def random_spec(trait: TraitKind, rng, input_names=("B3", "B4", "B5", "B8", "B11"),
                hidden=(5,), geometry=True) -> MlpSpec:
    """Spec with random weights; handy for tests and as a schema example."""
    names = tuple(input_names) + (GEOMETRY_INPUTS if geometry else ())
    n = len(names)
    lo = np.array([0.0 if x in BAND_INDEX else -1.0 for x in names])
    hi = np.array([1.0 for _ in names])
    ws, bs, fan = [], [], n
    for size in hidden:
        ws.append(rng.normal(0, 1 / np.sqrt(fan), size=(size, fan)))
        bs.append(rng.normal(0, 0.1, size=size))
        fan = size
    vr = DEFAULT_VALID_RANGE[trait]
    return MlpSpec(trait, names, lo, hi, tuple(ws), tuple(bs),
                   rng.normal(0, 1 / np.sqrt(fan), size=(1, fan)), rng.normal(0, 0.1, size=1),
                   vr[0], vr[1], vr)
