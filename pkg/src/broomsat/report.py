"""CSV tables and standalone SVG charts for a finished run.

Files written by :func:`emit_report`:

``metrics.csv``     metric,value,defined  (value empty when undefined)
``confusion.csv``   true,pred_infested,pred_clean,norm_infested,norm_clean
``history.csv``     epoch,loss,accuracy,val_loss,val_accuracy
``importance.csv``  rank,feature,mean_drop,std_drop
``density.csv``     feature,class,value,density
plus ``accuracy.svg``, ``loss.svg``, ``importance.svg`` and one
``density_<feature>.svg`` per density feature.

Floats are written with ``repr`` so equal runs give byte-identical files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .analysis import ConfusionMatrix, DensityCurve, ImportanceReport, MetricSet
from .errors import DataError

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"]


@dataclass
class RunArtifacts:
    metrics: MetricSet
    confusion: ConfusionMatrix
    history: dict
    importance: ImportanceReport | None = None
    densities: list[DensityCurve] = field(default_factory=list)


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def write_metrics_csv(m: MetricSet, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value", "defined"])
        for name, value in m.as_dict().items():
            w.writerow([name, _num(value), int(value is not None)])


def read_metrics_csv(path) -> MetricSet:
    values = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            values[row["metric"]] = float(row["value"]) if row["defined"] == "1" else None
    return MetricSet(**values, undefined=frozenset(k for k, v in values.items() if v is None))


def write_confusion_csv(cm: ConfusionMatrix, path):
    norm = cm.normalized
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true", "pred_infested", "pred_clean", "norm_infested", "norm_clean"])
        for name, row, nrow in zip(("infested", "clean"), cm.counts, norm):
            w.writerow([name, int(row[0]), int(row[1]), _num(nrow[0]), _num(nrow[1])])


def write_history_csv(history: dict, path):
    keys = ["loss", "accuracy", "val_loss", "val_accuracy"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch"] + keys)
        for e in range(len(history["loss"])):
            w.writerow([e + 1] + [_num(history[k][e]) for k in keys])


def write_importance_csv(rep: ImportanceReport, path):
    mean, std = rep.mean, rep.std
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "feature", "mean_drop", "std_drop"])
        for rank, i in enumerate(rep.ranking, start=1):
            w.writerow([rank, rep.feature_names[i], _num(mean[i]), _num(std[i])])


def write_density_csv(curves, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "class", "value", "density"])
        for c in curves:
            for x, d in zip(c.grid, c.density):
                w.writerow([c.feature, c.class_tag, _num(x), _num(d)])


# -- SVG ------------------------------------------------------------------------

W, H, PAD = 640, 400, 56


def _frame(title, xlabel, ylabel, x0, x1, y0, y1):
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0

    def sx(x):
        return PAD + (x - x0) / (x1 - x0) * (W - 2 * PAD)

    def sy(y):
        return H - PAD - (y - y0) / (y1 - y0) * (H - 2 * PAD)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>',
    ]
    for k in range(5):
        yv = y0 + (y1 - y0) * k / 4
        xv = x0 + (x1 - x0) * k / 4
        parts.append(f'<text x="{PAD - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
        parts.append(f'<text x="{sx(xv):.1f}" y="{H - PAD + 16}" text-anchor="middle">{xv:.3g}</text>')
    return parts, sx, sy


def line_chart(series: dict, title, xlabel, ylabel) -> str:
    """``series`` maps a legend label to ``(x, y)`` arrays."""
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
    ys = ys[np.isfinite(ys)]
    lo, hi = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    parts, sx, sy = _frame(title, xlabel, ylabel, float(xs.min()), float(xs.max()), lo, hi)
    for k, (label, (x, y)) in enumerate(series.items()):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y) if np.isfinite(b))
        color = PALETTE[k % len(PALETTE)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        parts.append(f'<text x="{W - PAD - 4}" y="{PAD + 16 * k}" text-anchor="end" '
                     f'fill="{color}">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def bar_chart(labels, values, errors, title, ylabel) -> str:
    values = np.asarray(values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    lo = min(0.0, float((values - errors).min()))
    hi = max(float((values + errors).max()), lo + 1e-9)
    parts, _, sy = _frame(title, "", ylabel, 0.0, float(len(values)), lo, hi)
    # drop the numeric x ticks drawn by the frame
    parts = [p for p in parts if f'y="{H - PAD + 16}"' not in p]
    slot = (W - 2 * PAD) / len(values)
    for i, (lab, v, e) in enumerate(zip(labels, values, errors)):
        x = PAD + i * slot
        top, base = sy(max(v, 0.0)), sy(min(v, 0.0))
        parts.append(f'<rect x="{x + 1:.2f}" y="{top:.2f}" width="{slot - 2:.2f}" '
                     f'height="{max(base - top, 0.0):.2f}" fill="{PALETTE[0]}"/>')
        parts.append(f'<line x1="{x + slot / 2:.2f}" y1="{sy(v - e):.2f}" x2="{x + slot / 2:.2f}" '
                     f'y2="{sy(v + e):.2f}" stroke="black"/>')
        parts.append(f'<text x="{x + slot / 2:.2f}" y="{H - PAD + 8}" font-size="8" '
                     f'text-anchor="end" transform="rotate(-60 {x + slot / 2:.2f} {H - PAD + 8})">'
                     f'{escape(lab)}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def emit_report(artifacts: RunArtifacts, out_dir) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise DataError(f"cannot write report to {out}: {exc}", code="unwritable") from exc
    written = []

    def put(name, writer, *args):
        path = out / name
        writer(*args, path)
        written.append(path)

    def put_svg(name, text):
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    put("metrics.csv", write_metrics_csv, artifacts.metrics)
    put("confusion.csv", write_confusion_csv, artifacts.confusion)
    hist = artifacts.history
    put("history.csv", write_history_csv, hist)
    epochs = np.arange(1, len(hist["loss"]) + 1)
    put_svg("accuracy.svg", line_chart({"train": (epochs, hist["accuracy"]),
                                        "validation": (epochs, hist["val_accuracy"])},
                                       "Accuracy per epoch", "epoch", "accuracy"))
    put_svg("loss.svg", line_chart({"train": (epochs, hist["loss"]),
                                    "validation": (epochs, hist["val_loss"])},
                                   "Loss per epoch", "epoch", "binary cross-entropy"))
    if artifacts.importance is not None:
        rep = artifacts.importance
        put("importance.csv", write_importance_csv, rep)
        order = rep.ranking
        put_svg("importance.svg", bar_chart([rep.feature_names[i] for i in order],
                                            rep.mean[order], rep.std[order],
                                            "Permutation importance", "accuracy drop"))
    if artifacts.densities:
        put("density.csv", write_density_csv, artifacts.densities)
        by_feature: dict[str, dict] = {}
        for c in artifacts.densities:
            by_feature.setdefault(c.feature, {})[c.class_tag] = (c.grid, c.density)
        for feat, series in by_feature.items():
            put_svg(f"density_{feat}.svg", line_chart(series, f"{feat} at peak vegetation",
                                                      feat, "density"))
    return written
