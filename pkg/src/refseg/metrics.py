"""Evaluation metrics: Dice, IoU, and the 95th-percentile Hausdorff distance.

Conventions (documented because implementations in the wild differ):

* ``dice``/``iou`` return 1.0 when prediction and truth are both empty.
* ``hd95`` pools the two directed boundary-to-boundary nearest-distance
  lists into one set and takes its 95th percentile with linear
  interpolation between order statistics. It is ``None`` (undefined)
  when either mask has no foreground for the class.
* Boundaries are foreground pixels 4-adjacent to background or to the
  image edge; distances are Euclidean in pixel units.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


def _as_labels(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"expected 2-D label mask, got shape {arr.shape}")
    return arr


def _check_same_shape(pred: np.ndarray, truth: np.ndarray) -> None:
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")


def dice(pred, truth, class_id: int) -> float:
    """Dice overlap 2|P∩T| / (|P|+|T|); 1.0 when both masks are empty."""
    p = _as_labels(pred) == class_id
    t = _as_labels(truth) == class_id
    _check_same_shape(p, t)
    denom = int(p.sum()) + int(t.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & t).sum()) / denom


def iou(pred, truth, class_id: int) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    p = _as_labels(pred) == class_id
    t = _as_labels(truth) == class_id
    _check_same_shape(p, t)
    union = int((p | t).sum())
    if union == 0:
        return 1.0
    return int((p & t).sum()) / union


def boundary_pixels(binary: np.ndarray) -> np.ndarray:
    """(N, 2) row/col coordinates of foreground pixels 4-adjacent to
    background or to the image edge."""
    fg = np.asarray(binary, dtype=bool)
    padded = np.pad(fg, 1, constant_values=False)
    up = padded[:-2, 1:-1]
    down = padded[2:, 1:-1]
    left = padded[1:-1, :-2]
    right = padded[1:-1, 2:]
    boundary = fg & ~(up & down & left & right)
    return np.argwhere(boundary)


def hd95(pred, truth, class_id: int) -> float | None:
    """95th percentile of pooled directed boundary distances, or None
    when either mask has no foreground for ``class_id``."""
    p = _as_labels(pred) == class_id
    t = _as_labels(truth) == class_id
    _check_same_shape(p, t)
    bp = boundary_pixels(p)
    bt = boundary_pixels(t)
    if len(bp) == 0 or len(bt) == 0:
        return None
    d_p_to_t, _ = cKDTree(bt).query(bp, k=1)
    d_t_to_p, _ = cKDTree(bp).query(bt, k=1)
    pooled = np.concatenate([np.atleast_1d(d_p_to_t), np.atleast_1d(d_t_to_p)])
    return float(np.percentile(pooled, 95))


@dataclass
class ClassMetrics:
    dice: float
    iou: float
    hd95: float | None  # None when no evaluated slice had a defined HD95
    n: int  # slices evaluated
    undefined_hd95: int  # slices where HD95 was undefined


@dataclass
class MetricReport:
    """Per-class means over slices plus the foreground-class average."""

    per_class: dict[int, ClassMetrics] = field(default_factory=dict)

    @property
    def mean_dice(self) -> float:
        return float(np.mean([m.dice for m in self.per_class.values()]))

    @property
    def mean_iou(self) -> float:
        return float(np.mean([m.iou for m in self.per_class.values()]))

    @property
    def mean_hd95(self) -> float | None:
        vals = [m.hd95 for m in self.per_class.values() if m.hd95 is not None]
        if not vals:
            return None
        return float(np.mean(vals))


def evaluate(preds, truths, num_classes: int) -> MetricReport:
    """Evaluate aligned prediction/truth label masks over foreground
    classes 1..num_classes."""
    preds = list(preds)
    truths = list(truths)
    if len(preds) != len(truths):
        raise ValueError(f"misaligned sets: {len(preds)} preds vs {len(truths)} truths")
    report = MetricReport()
    for c in range(1, num_classes + 1):
        dices, ious, hds = [], [], []
        undefined = 0
        for p, t in zip(preds, truths):
            dices.append(dice(p, t, c))
            ious.append(iou(p, t, c))
            h = hd95(p, t, c)
            if h is None:
                undefined += 1
            else:
                hds.append(h)
        report.per_class[c] = ClassMetrics(
            dice=float(np.mean(dices)),
            iou=float(np.mean(ious)),
            hd95=float(np.mean(hds)) if hds else None,
            n=len(preds),
            undefined_hd95=undefined,
        )
    return report


def _fmt_hd(value: float | None) -> str:
    return "nan" if value is None else repr(value)


def write_report_csv(path, report: MetricReport, header_comment: str | None = None) -> None:
    """One row per class plus an AVG row: class,dice,iou,hd95,n,undefined_hd95."""
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        writer = csv.writer(f)
        writer.writerow(["class", "dice", "iou", "hd95", "n", "undefined_hd95"])
        for c in sorted(report.per_class):
            m = report.per_class[c]
            writer.writerow([c, repr(m.dice), repr(m.iou), _fmt_hd(m.hd95), m.n, m.undefined_hd95])
        n_total = max((m.n for m in report.per_class.values()), default=0)
        undef_total = sum(m.undefined_hd95 for m in report.per_class.values())
        writer.writerow(
            [
                "AVG",
                repr(report.mean_dice),
                repr(report.mean_iou),
                _fmt_hd(report.mean_hd95),
                n_total,
                undef_total,
            ]
        )


def read_report_csv(path) -> MetricReport:
    """Parse a CSV produced by :func:`write_report_csv` (AVG row dropped)."""
    report = MetricReport()
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    for row in rows[1:]:
        if row[0] == "AVG":
            continue
        hd_val = float(row[3])
        report.per_class[int(row[0])] = ClassMetrics(
            dice=float(row[1]),
            iou=float(row[2]),
            hd95=None if math.isnan(hd_val) else hd_val,
            n=int(row[4]),
            undefined_hd95=int(row[5]),
        )
    return report
