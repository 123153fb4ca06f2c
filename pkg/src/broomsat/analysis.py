"""Classification metrics, permutation importance and kernel densities.

The positive class is "infested" (label 1). Confusion matrix rows are the
true class and columns the predicted class, both ordered (positive,
negative)::

    [[tp, fn],
     [fp, tn]]

The normalized form divides each row by its total; a row with no samples
is NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def counts(self) -> np.ndarray:
        return np.array([[self.tp, self.fn], [self.fp, self.tn]])

    @property
    def normalized(self) -> np.ndarray:
        c = self.counts.astype(np.float64)
        rows = c.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, c / np.where(rows > 0, rows, 1.0), np.nan)


def confusion(labels, predictions) -> ConfusionMatrix:
    y = np.asarray(labels)
    p = np.asarray(predictions)
    if y.shape != p.shape:
        raise DataError("labels and predictions differ in length", code="shape")
    if y.size == 0:
        raise DataError("confusion matrix of an empty set", code="empty")
    if not (np.isin(y, (0, 1)).all() and np.isin(p, (0, 1)).all()):
        raise DataError("labels and predictions must be 0 or 1", code="labels")
    y, p = y == 1, p == 1
    return ConfusionMatrix(int((y & p).sum()), int((~y & p).sum()),
                           int((y & ~p).sum()), int((~y & ~p).sum()))


@dataclass(frozen=True)
class MetricSet:
    """Ratios are ``None`` when their denominator is zero (listed in ``undefined``)."""

    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    undefined: frozenset = field(default_factory=frozenset)

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


def _ratio(num, den):
    return num / den if den > 0 else None


def metrics(cm: ConfusionMatrix) -> MetricSet:
    accuracy = _ratio(cm.tp + cm.tn, cm.total)
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    values = {"accuracy": accuracy, "precision": precision, "recall": recall, "f1": f1}
    return MetricSet(**values, undefined=frozenset(k for k, v in values.items() if v is None))


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    feature_names: list[str]
    baseline_accuracy: float
    drops: np.ndarray  # (features, repeats): baseline - permuted accuracy

    @property
    def mean(self) -> np.ndarray:
        return self.drops.mean(axis=1)

    @property
    def std(self) -> np.ndarray:
        return self.drops.std(axis=1)

    @property
    def ranking(self) -> list[int]:
        """Feature indices by mean drop, largest first (ties keep feature order)."""
        return [int(i) for i in np.argsort(-self.mean, kind="stable")]

    def top(self, n) -> list[str]:
        return [self.feature_names[i] for i in self.ranking[:n]]


def _accuracy_of(model, x, y):
    if hasattr(model, "predict_proba"):
        probs = np.asarray(model.predict_proba(x))
    else:
        probs = np.asarray(model(x))
    return float(np.mean((probs >= 0.5) == (y == 1)))


def permutation_importance(model, inputs, labels, repeats=10, seed=0,
                           feature_names=None) -> ImportanceReport:
    """Accuracy drop when one feature's whole trajectory is shuffled across samples.

    ``model`` exposes ``predict_proba(inputs)`` (or is a callable returning
    probabilities); ``inputs`` is (samples, steps, features). Each shuffle
    moves complete per-sample time series, so within-sample temporal shape
    is preserved.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    x = np.asarray(inputs)
    y = np.asarray(labels)
    n_feat = x.shape[2]
    names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(n_feat)]
    rng = np.random.default_rng(seed)
    base = _accuracy_of(model, x, y)
    drops = np.empty((n_feat, repeats))
    work = x.copy()
    for f in range(n_feat):
        for r in range(repeats):
            perm = rng.permutation(x.shape[0])
            work[:, :, f] = x[perm, :, f]
            drops[f, r] = base - _accuracy_of(model, work, y)
        work[:, :, f] = x[:, :, f]
    return ImportanceReport(names, base, drops)


@dataclass(frozen=True, eq=False)
class DensityCurve:
    feature: str
    class_tag: str
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float


def silverman_bandwidth(values) -> float:
    """Rule-of-thumb ``1.06 * sigma * n**(-1/5)`` with population sigma."""
    v = np.asarray(values, dtype=np.float64)
    return float(1.06 * v.std() * v.size ** (-0.2))


def kde(values, class_tag="", grid_size=256, feature="") -> DensityCurve:
    """Gaussian kernel density on ``[min - 3h, max + 3h]``."""
    v = np.asarray(values, dtype=np.float64).ravel()
    v = v[np.isfinite(v)]
    if v.size < 2:
        raise DataError("kde needs at least two finite values", code="too_few")
    h = silverman_bandwidth(v)
    if not h > 0:
        raise DataError("all values identical; density would be a spike", code="degenerate")
    grid = np.linspace(v.min() - 3 * h, v.max() + 3 * h, grid_size)
    u = (grid[:, None] - v[None, :]) / h
    dens = np.exp(-0.5 * u * u).sum(axis=1) / (v.size * h * np.sqrt(2 * np.pi))
    return DensityCurve(feature, class_tag, grid, dens, h)
