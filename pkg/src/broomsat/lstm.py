"""Two-layer LSTM pixel classifier written directly against numpy.

Parameters live in a plain ``dict`` of arrays keyed by layer name:

    lstm0.W  (4H0, I + H0)     gate order: input, forget, cell, output
    lstm0.b  (4H0,)
    lstm1.W  (4H1, H0 + H1)
    lstm1.b  (4H1,)
    dense.W  (D, H1)           only when ``dense_units`` is set
    dense.b  (D,)
    out.W    (1, D or H1)
    out.b    (1,)

Parameters are float64 unless training asks for float32; the gradient check
runs in float64 against central finite differences.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import DataError, FormatError

PROB_EPS = 1e-7


@dataclass(frozen=True)
class LstmConfig:
    input_size: int = 37
    lstm_units: tuple[int, ...] = (64, 32)
    dropout_rate: float = 0.2
    dense_units: int | None = 32
    sequence_length: int = 48

    def __post_init__(self):
        object.__setattr__(self, "lstm_units", tuple(int(u) for u in self.lstm_units))
        sizes = [self.input_size, self.sequence_length, *self.lstm_units]
        if self.dense_units is not None:
            sizes.append(self.dense_units)
        if not self.lstm_units or min(sizes) < 1:
            raise ValueError("all layer sizes must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lstm_units"] = list(self.lstm_units)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LstmConfig":
        return cls(**{**d, "lstm_units": tuple(d["lstm_units"])})


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    folds: int = 5
    test_fraction: float = 0.30
    # 65:15 of the non-test remainder
    validation_fraction: float = 0.15 / 0.80
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    early_stopping_patience: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # arithmetic precision for training and prediction; gradient checks use float64
    precision: str = "float32"

    def __post_init__(self):
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be 'float32' or 'float64'")
        for name in ("test_fraction", "validation_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.epochs < 1 or self.folds < 2 or self.batch_size < 1:
            raise ValueError("epochs >= 1, folds >= 2 and batch_size >= 1 required")


def param_shapes(config: LstmConfig) -> dict[str, tuple[int, ...]]:
    shapes = {}
    fan_in = config.input_size
    for k, h in enumerate(config.lstm_units):
        shapes[f"lstm{k}.W"] = (4 * h, fan_in + h)
        shapes[f"lstm{k}.b"] = (4 * h,)
        fan_in = h
    if config.dense_units is not None:
        shapes["dense.W"] = (config.dense_units, fan_in)
        shapes["dense.b"] = (config.dense_units,)
        fan_in = config.dense_units
    shapes["out.W"] = (1, fan_in)
    shapes["out.b"] = (1,)
    return shapes


def param_count(config: LstmConfig) -> int:
    """Closed-form trainable scalar count.

    Each LSTM layer contributes ``4 * (H * (I + H) + H)``; each dense layer
    ``fan_in * units + units``.
    """
    total = 0
    fan_in = config.input_size
    for h in config.lstm_units:
        total += 4 * (h * (fan_in + h) + h)
        fan_in = h
    if config.dense_units is not None:
        total += fan_in * config.dense_units + config.dense_units
        fan_in = config.dense_units
    return total + fan_in + 1


def layer_param_counts(config: LstmConfig) -> list[int]:
    counts = []
    shapes = param_shapes(config)
    names = [n[:-2] for n in shapes if n.endswith(".W")]
    for name in names:
        counts.append(int(np.prod(shapes[name + ".W"]) + np.prod(shapes[name + ".b"])))
    return counts


def init_params(config: LstmConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Xavier-uniform weights, zero biases except forget gates at +1."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".W"):
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            params[name] = np.zeros(shape)
    for k, h in enumerate(config.lstm_units):
        params[f"lstm{k}.b"][h:2 * h] = 1.0
    return params


def zeros_like_params(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def n_lstm_layers(params) -> int:
    return sum(1 for k in params if k.startswith("lstm") and k.endswith(".W"))


def _lstm_layer_forward(x, W, b):
    # time-major buffers keep each step's slice contiguous
    n, steps, n_in = x.shape
    hidden = W.shape[0] // 4
    Wx = W[:, :n_in].T
    Wh = W[:, n_in:].T
    xt = np.ascontiguousarray(x.transpose(1, 0, 2))
    acts = (xt.reshape(steps * n, n_in) @ Wx).reshape(steps, n, 4 * hidden)
    acts += b
    dt = acts.dtype
    cells = np.empty((steps, n, hidden), dtype=dt)
    tanh_c = np.empty((steps, n, hidden), dtype=dt)
    hs = np.empty((steps, n, hidden), dtype=dt)
    h = np.zeros((n, hidden), dtype=dt)
    c = np.zeros((n, hidden), dtype=dt)
    for t in range(steps):
        a = acts[t]
        a += h @ Wh
        expit(a[:, :2 * hidden], out=a[:, :2 * hidden])
        np.tanh(a[:, 2 * hidden:3 * hidden], out=a[:, 2 * hidden:3 * hidden])
        expit(a[:, 3 * hidden:], out=a[:, 3 * hidden:])
        c = a[:, hidden:2 * hidden] * c + a[:, :hidden] * a[:, 2 * hidden:3 * hidden]
        cells[t] = c
        np.tanh(c, out=tanh_c[t])
        h = np.multiply(a[:, 3 * hidden:], tanh_c[t], out=hs[t])
    return hs, {"xt": xt, "acts": acts, "cells": cells, "tanh_c": tanh_c, "hs": hs}


def _lstm_layer_backward(dhs, W, cache):
    """``dhs`` is time-major (steps, N, H); returns time-major ``dx``."""
    xt, acts, cells, tanh_c, hs = (cache[k] for k in ("xt", "acts", "cells", "tanh_c", "hs"))
    steps, n, n_in = xt.shape
    hidden = W.shape[0] // 4
    Wh = W[:, n_in:]
    dt = acts.dtype
    dz_all = np.empty((steps, n, 4 * hidden), dtype=dt)
    dh_next = np.zeros((n, hidden), dtype=dt)
    dc_next = np.zeros((n, hidden), dtype=dt)
    zeros = np.zeros((n, hidden), dtype=dt)
    for t in range(steps - 1, -1, -1):
        a = acts[t]
        i, f = a[:, :hidden], a[:, hidden:2 * hidden]
        g, o = a[:, 2 * hidden:3 * hidden], a[:, 3 * hidden:]
        tc = tanh_c[t]
        dh = dhs[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        c_prev = cells[t - 1] if t > 0 else zeros
        dz = dz_all[t]
        dz[:, :hidden] = dc * g * i * (1.0 - i)
        dz[:, hidden:2 * hidden] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * hidden:3 * hidden] = dc * i * (1.0 - g * g)
        dz[:, 3 * hidden:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz @ Wh
    # h_{t-1} pairs with dz_t for t >= 1
    dWh = hs[:-1].reshape(-1, hidden).T @ dz_all[1:].reshape(-1, 4 * hidden)
    flat_dz = dz_all.reshape(steps * n, 4 * hidden)
    dWx = xt.reshape(steps * n, n_in).T @ flat_dz
    dW = np.concatenate([dWx.T, dWh.T], axis=1)
    db = flat_dz.sum(axis=0)
    dx = (flat_dz @ W[:, :n_in]).reshape(steps, n, n_in)
    return dx, dW, db


def forward(params, batch, mode="eval", seed=None, dropout_rate=0.0):
    """Run the network on ``batch`` of shape (N, steps, features).

    Returns ``(probabilities, cache)``. In ``"train"`` mode inverted dropout
    with ``dropout_rate`` is applied to every LSTM layer output; the masks
    are drawn from ``seed`` and kept in the cache for the backward pass.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    # computation runs in the parameters' precision
    batch = np.asarray(batch, dtype=params["lstm0.W"].dtype)
    if batch.ndim != 3:
        raise DataError(f"expected (N, steps, features) input, got shape {batch.shape}", code="shape")
    n_in = params["lstm0.W"].shape[1] - params["lstm0.W"].shape[0] // 4
    if batch.shape[2] != n_in:
        raise DataError(f"expected {n_in} features, got {batch.shape[2]}", code="shape")
    use_dropout = mode == "train" and dropout_rate > 0.0
    rng = np.random.default_rng(seed) if use_dropout else None
    keep = 1.0 - dropout_rate

    cache = {"mode": mode, "layers": [], "masks": []}
    h = batch
    n_layers = n_lstm_layers(params)
    for k in range(n_layers):
        hs, lc = _lstm_layer_forward(h, params[f"lstm{k}.W"], params[f"lstm{k}.b"])
        cache["layers"].append(lc)
        # the last layer only exposes its final hidden state
        h = hs.transpose(1, 0, 2) if k < n_layers - 1 else hs[-1]
        if use_dropout:
            mask = ((rng.random(h.shape) < keep) / keep).astype(h.dtype)
            h = h * mask
            cache["masks"].append(mask)
        else:
            cache["masks"].append(None)
    cache["h_last"] = h
    if "dense.W" in params:
        pre = h @ params["dense.W"].T + params["dense.b"]
        cache["dense_pre"] = pre
        h = np.maximum(pre, 0.0)
        cache["dense_out"] = h
    logits = (h @ params["out.W"].T + params["out.b"])[:, 0]
    probs = expit(logits)
    cache["logits"] = logits
    cache["probs"] = probs
    return probs, cache


def loss(probs, labels) -> float:
    """Mean binary cross-entropy with probabilities clipped to [1e-7, 1 - 1e-7]."""
    p = np.clip(np.asarray(probs, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def backward(params, cache, labels):
    """Exact gradient of :func:`loss` through the cached forward pass."""
    if cache.get("mode") != "train":
        raise ValueError("backward needs a cache produced by forward(mode='train')")
    p = cache["probs"]
    y = np.asarray(labels, dtype=p.dtype)
    if y.shape != p.shape:
        raise DataError("labels and batch size differ", code="shape")
    n = p.shape[0]
    clipped = (p < PROB_EPS) | (p > 1.0 - PROB_EPS)
    dlogit = np.where(clipped, 0.0, (p - y) / n).astype(p.dtype)[:, None]

    grads = {}
    if "dense.W" in params:
        dense_out = cache["dense_out"]
        grads["out.W"] = dlogit.T @ dense_out
        grads["out.b"] = dlogit.sum(axis=0)
        dpre = (dlogit @ params["out.W"]) * (cache["dense_pre"] > 0.0)
        grads["dense.W"] = dpre.T @ cache["h_last"]
        grads["dense.b"] = dpre.sum(axis=0)
        dh = dpre @ params["dense.W"]
    else:
        grads["out.W"] = dlogit.T @ cache["h_last"]
        grads["out.b"] = dlogit.sum(axis=0)
        dh = dlogit @ params["out.W"]

    n_layers = n_lstm_layers(params)
    for k in range(n_layers - 1, -1, -1):
        lc = cache["layers"][k]
        mask = cache["masks"][k]
        if k == n_layers - 1:
            if mask is not None:
                dh = dh * mask
            dhs = np.zeros_like(lc["hs"])
            dhs[-1] = dh
        else:
            # dh arrives time-major from the layer above
            dhs = dh if mask is None else dh * mask.transpose(1, 0, 2)
        dh, grads[f"lstm{k}.W"], grads[f"lstm{k}.b"] = _lstm_layer_backward(
            dhs, params[f"lstm{k}.W"], lc)
    return {k: grads[k] for k in params}


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            params[k] -= lr_t * self.m[k] / (np.sqrt(self.v[k]) + self.eps)


# -- data handling ----------------------------------------------------------

@dataclass
class Standardizer:
    """Per-feature z-scoring with statistics pooled over samples and steps."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x) -> "Standardizer":
        x = np.asarray(x, dtype=np.float64)
        mean = x.mean(axis=(0, 1))
        std = x.std(axis=(0, 1))
        return cls(mean=mean, scale=np.where(std > 0, std, 1.0))

    def transform(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(mean=np.asarray(d["mean"], dtype=np.float64),
                   scale=np.asarray(d["scale"], dtype=np.float64))


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels).astype(np.int64)
        if self.inputs.ndim != 3 or self.inputs.shape[0] != self.labels.shape[0]:
            raise DataError("inputs must be (N, steps, features) with one label per sample",
                            code="shape")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1", code="labels")
        if not np.isfinite(self.inputs).all():
            raise DataError("inputs contain non-finite values", code="nonfinite")

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], list(self.feature_names))


@dataclass
class TrainedModel:
    params: dict
    config: LstmConfig
    scaler: Standardizer

    def predict_proba(self, raw_inputs):
        return predict(self.params, self.scaler.transform(raw_inputs))[0]

    def predict(self, raw_inputs):
        return predict(self.params, self.scaler.transform(raw_inputs))


def predict(params, inputs, batch_size=1024):
    """Eval-mode probabilities and labels (``p >= 0.5`` is positive)."""
    inputs = np.asarray(inputs, dtype=params["lstm0.W"].dtype)
    chunks = [forward(params, inputs[s:s + batch_size], mode="eval")[0]
              for s in range(0, inputs.shape[0], batch_size)]
    probs = np.concatenate(chunks) if chunks else np.zeros(0)
    return probs, (probs >= 0.5).astype(np.int64)


def accuracy(probs, labels) -> float:
    return float(np.mean((np.asarray(probs) >= 0.5) == (np.asarray(labels) == 1)))


def _evaluate(params, x, y):
    probs, _ = predict(params, x)
    return loss(probs, y), accuracy(probs, y)


def fit(dataset: Dataset, lstm_config: LstmConfig, train_config: TrainConfig,
        validation: Dataset | None = None, log=None):
    """Train with Adam on shuffled mini-batches.

    When ``validation`` is omitted a stratified ``validation_fraction`` of
    ``dataset`` is held out. Standardization statistics come from the
    training portion only. Returns ``(TrainedModel, history)`` where history
    maps ``loss``, ``accuracy``, ``val_loss``, ``val_accuracy`` to per-epoch
    lists; training metrics are running means over the epoch's batches.
    """
    if np.unique(dataset.labels).size < 2:
        raise DataError("training data must contain both classes", code="single_class")
    if dataset.inputs.shape[2] != lstm_config.input_size:
        raise DataError("feature count does not match lstm_config.input_size", code="shape")
    rng = np.random.default_rng(train_config.seed)
    train = dataset
    if validation is None:
        tr_idx, va_idx = stratified_split(dataset.labels, train_config.validation_fraction, rng)
        train, validation = dataset.subset(tr_idx), dataset.subset(va_idx)

    scaler = Standardizer.fit(train.inputs)
    x, y = scaler.transform(train.inputs), train.labels
    xv, yv = scaler.transform(validation.inputs), validation.labels

    dtype = np.dtype(train_config.precision)
    x, xv = x.astype(dtype), xv.astype(dtype)
    params = {k: v.astype(dtype) for k, v in
              init_params(lstm_config, seed=int(rng.integers(2**31))).items()}
    opt = Adam(params, lr=train_config.learning_rate, beta1=train_config.beta1,
               beta2=train_config.beta2, eps=train_config.adam_eps)
    history = {"loss": [], "accuracy": [], "val_loss": [], "val_accuracy": []}
    best = (np.inf, None)
    stale = 0
    bs = train_config.batch_size
    for epoch in range(train_config.epochs):
        order = rng.permutation(len(y))
        tot_loss = tot_hits = 0.0
        for s in range(0, len(y), bs):
            idx = order[s:s + bs]
            probs, cache = forward(params, x[idx], mode="train",
                                   seed=int(rng.integers(2**31)),
                                   dropout_rate=lstm_config.dropout_rate)
            grads = backward(params, cache, y[idx])
            opt.step(params, grads)
            tot_loss += loss(probs, y[idx]) * len(idx)
            tot_hits += accuracy(probs, y[idx]) * len(idx)
        history["loss"].append(tot_loss / len(y))
        history["accuracy"].append(tot_hits / len(y))
        vl, va = _evaluate(params, xv, yv) if len(yv) else (float("nan"), float("nan"))
        history["val_loss"].append(vl)
        history["val_accuracy"].append(va)
        if log is not None:
            log(f"epoch {epoch + 1}/{train_config.epochs} loss={history['loss'][-1]:.4f} "
                f"acc={history['accuracy'][-1]:.4f} val_loss={vl:.4f} val_acc={va:.4f}")
        patience = train_config.early_stopping_patience
        if patience is not None:
            if vl < best[0]:
                best, stale = (vl, {k: v.copy() for k, v in params.items()}), 0
            else:
                stale += 1
                if stale >= patience:
                    params = best[1]
                    break
    return TrainedModel(params, lstm_config, scaler), history


def stratified_split(labels, fraction, rng):
    """Split indices so that ``fraction`` of each class lands in the second part."""
    labels = np.asarray(labels)
    first, second = [], []
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        k = int(round(fraction * idx.size))
        second.append(idx[:k])
        first.append(idx[k:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


def stratified_folds(labels, folds, rng):
    """Partition indices into ``folds`` disjoint groups with matching class ratios."""
    labels = np.asarray(labels)
    parts = [[] for _ in range(folds)]
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        for k, chunk in enumerate(np.array_split(idx, folds)):
            parts[k].append(chunk)
    return [np.sort(np.concatenate(p)) for p in parts]


@dataclass
class CrossValidation:
    test_idx: np.ndarray
    folds: list[np.ndarray]
    fold_metrics: list[dict]
    fold_histories: list[dict]
    model: TrainedModel
    history: dict
    test_probs: np.ndarray
    test_metrics: dict


def cross_validate(dataset: Dataset, lstm_config: LstmConfig, train_config: TrainConfig,
                   log=None) -> CrossValidation:
    """Stratified hold-out test split, k-fold training, final retrain.

    The test split is drawn first; the rest is cut into ``folds`` stratified
    partitions, each serving once as validation. The reported model is
    retrained on all non-test samples and scored once on the test split.
    """
    n = len(dataset)
    if n < 10 * train_config.folds:
        raise DataError(f"need at least {10 * train_config.folds} samples, got {n}",
                        code="insufficient")
    if np.unique(dataset.labels).size < 2:
        raise DataError("dataset must contain both classes", code="single_class")
    rng = np.random.default_rng(train_config.seed)
    rest_idx, test_idx = stratified_split(dataset.labels, train_config.test_fraction, rng)
    folds_local = stratified_folds(dataset.labels[rest_idx], train_config.folds, rng)
    folds = [rest_idx[f] for f in folds_local]

    fold_metrics, fold_histories = [], []
    for k, val_idx in enumerate(folds):
        tr_idx = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != k]))
        cfg = _with_seed(train_config, train_config.seed + 1 + k)
        model, hist = fit(dataset.subset(tr_idx), lstm_config, cfg,
                          validation=dataset.subset(val_idx), log=log)
        fold_histories.append(hist)
        fold_metrics.append({"fold": k, "train_accuracy": hist["accuracy"][-1],
                             "val_accuracy": hist["val_accuracy"][-1],
                             "val_loss": hist["val_loss"][-1]})

    # final model: all non-test data, monitored against the held-out test split;
    # early stopping is off here so the test split never steers training
    cfg = _with_seed(train_config, train_config.seed + 1 + train_config.folds)
    cfg = TrainConfig(**{**asdict(cfg), "early_stopping_patience": None})
    model, hist = fit(dataset.subset(rest_idx), lstm_config, cfg,
                      validation=dataset.subset(test_idx), log=log)
    test_probs = model.predict_proba(dataset.inputs[test_idx])
    test_metrics = {"loss": loss(test_probs, dataset.labels[test_idx]),
                    "accuracy": accuracy(test_probs, dataset.labels[test_idx])}
    return CrossValidation(test_idx, folds, fold_metrics, fold_histories, model, hist,
                           test_probs, test_metrics)


def _with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return TrainConfig(**{**asdict(cfg), "seed": seed})


# -- checkpoint file ----------------------------------------------------------

CHECKPOINT_MAGIC = b"BSLSTM\r\n"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<8sII")


def save_checkpoint(params, config: LstmConfig, path, extra: dict | None = None):
    """Write magic, version, JSON config block, float64 payload and a CRC32 trailer."""
    block = json.dumps({"config": config.to_dict(), "extra": extra or {}},
                       sort_keys=True).encode("utf-8")
    shapes = param_shapes(config)
    if set(shapes) != set(params):
        raise DataError("parameter names do not match config", code="shape")
    payload = b"".join(
        np.ascontiguousarray(params[k], dtype="<f8").tobytes() for k in shapes)
    body = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(block)) + block
    body += struct.pack("<Q", len(payload) // 8) + payload
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path, expect: LstmConfig | None = None):
    """Inverse of :func:`save_checkpoint`; returns ``(params, config, extra)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size + 12:
        raise FormatError(f"{path}: truncated checkpoint", code="truncated")
    magic, version, block_len = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file", code="magic")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}", code="version")
    pos = _HEADER.size + block_len
    if len(raw) < pos + 12:
        raise FormatError(f"{path}: truncated checkpoint", code="truncated")
    (n_values,) = struct.unpack_from("<Q", raw, pos)
    end = pos + 8 + 8 * n_values
    if len(raw) != end + 4:
        raise FormatError(f"{path}: truncated checkpoint", code="truncated")
    (crc,) = struct.unpack_from("<I", raw, end)
    if zlib.crc32(raw[:end]) != crc:
        raise FormatError(f"{path}: checksum mismatch", code="checksum")
    meta = json.loads(raw[_HEADER.size:pos].decode("utf-8"))
    config = LstmConfig.from_dict(meta["config"])
    if expect is not None and expect != config:
        raise FormatError(f"{path}: checkpoint config {config} does not match {expect}",
                          code="shape")
    values = np.frombuffer(raw, dtype="<f8", count=n_values, offset=pos + 8).astype(np.float64)
    shapes = param_shapes(config)
    if sum(int(np.prod(s)) for s in shapes.values()) != n_values:
        raise FormatError(f"{path}: payload size does not match config", code="shape")
    params, off = {}, 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        params[name] = values[off:off + size].reshape(shape).copy()
        off += size
    return params, config, meta.get("extra", {})
