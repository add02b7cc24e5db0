"""Binary segmentation metrics at voxel and point resolution.

Voxel metrics are computed over occupied voxels only; grading empty space
would inflate the true-negative count. Degenerate ratios (zero denominator)
evaluate to 0 and raise a flag on the record instead of failing silently.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import PointSetMismatch, ShapeMismatch
from .voxelizer import LabelGrid

CSV_COLUMNS = ["scene", "P", "R", "F1", "IoU", "tp", "fp", "fn", "tn"]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class MetricRecord:
    counts: ConfusionCounts
    precision: float
    recall: float
    f1: float
    iou: float
    degenerate: bool  # true when any ratio had a zero denominator

    def as_dict(self) -> dict:
        return {
            "P": self.precision, "R": self.recall, "F1": self.f1, "IoU": self.iou,
            "tp": self.counts.tp, "fp": self.counts.fp,
            "fn": self.counts.fn, "tn": self.counts.tn,
            "degenerate": self.degenerate,
        }


def _binary_arrays(pred: np.ndarray, truth: np.ndarray) -> ConfusionCounts:
    pred = pred.astype(bool)
    truth = truth.astype(bool)
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    return ConfusionCounts(tp, fp, fn, tn)


def confusion(pred: LabelGrid, truth: LabelGrid, mask: np.ndarray) -> ConfusionCounts:
    """Counts over mask-true voxels only (mask = occupancy of the input grid)."""
    mask = np.asarray(mask, dtype=bool)
    if pred.labels.shape != truth.labels.shape or mask.shape != pred.labels.shape:
        raise ShapeMismatch("prediction, truth, and mask dims differ")
    return _binary_arrays(pred.labels[mask], truth.labels[mask])


def precision(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0


def recall(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0


def f1(c: ConfusionCounts) -> float:
    p, r = precision(c), recall(c)
    return 2.0 * p * r / (p + r) if p + r else 0.0


def iou(c: ConfusionCounts) -> float:
    denom = c.tp + c.fp + c.fn
    return c.tp / denom if denom else 0.0


def record_from_counts(c: ConfusionCounts) -> MetricRecord:
    degenerate = (c.tp + c.fp == 0) or (c.tp + c.fn == 0) or (c.tp + c.fp + c.fn == 0)
    return MetricRecord(c, precision(c), recall(c), f1(c), iou(c), degenerate)


def evaluate_grids(pred: LabelGrid, truth: LabelGrid, mask: np.ndarray) -> MetricRecord:
    return record_from_counts(confusion(pred, truth, mask))


def evaluate_pointwise(pred_cloud: PointCloud, truth_cloud: PointCloud) -> MetricRecord:
    """Metrics over per-point labels; the clouds must share their point set."""
    if len(pred_cloud) != len(truth_cloud):
        raise PointSetMismatch(f"point counts differ: {len(pred_cloud)} vs {len(truth_cloud)}")
    if len(pred_cloud) and not np.allclose(pred_cloud.positions, truth_cloud.positions, atol=1e-6):
        raise PointSetMismatch("positions differ between prediction and truth clouds")
    if pred_cloud.labels is None or truth_cloud.labels is None:
        raise PointSetMismatch("both clouds must carry labels")
    return record_from_counts(_binary_arrays(pred_cloud.labels, truth_cloud.labels))


def aggregate(records: list[MetricRecord]) -> dict:
    """Both aggregation conventions: mean of per-scene metrics, and pooled counts."""
    if not records:
        return {"mean_over_scenes": None, "pooled": None}
    mean = {
        "P": float(np.mean([r.precision for r in records])),
        "R": float(np.mean([r.recall for r in records])),
        "F1": float(np.mean([r.f1 for r in records])),
        "IoU": float(np.mean([r.iou for r in records])),
    }
    total = records[0].counts
    for r in records[1:]:
        total = total + r.counts
    pooled = record_from_counts(total)
    return {"mean_over_scenes": mean, "pooled": pooled.as_dict()}


def write_metrics_csv(path, rows: list[tuple[str, MetricRecord]]) -> None:
    """Per-scene CSV with the documented column order."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for scene, rec in rows:
            writer.writerow([
                scene,
                f"{rec.precision:.6f}", f"{rec.recall:.6f}", f"{rec.f1:.6f}", f"{rec.iou:.6f}",
                rec.counts.tp, rec.counts.fp, rec.counts.fn, rec.counts.tn,
            ])


def write_metrics_json(path, rows: list[tuple[str, MetricRecord]]) -> None:
    payload = {
        "scenes": {scene: rec.as_dict() for scene, rec in rows},
        "aggregate": aggregate([rec for _, rec in rows]),
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
