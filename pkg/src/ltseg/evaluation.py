"""Dual-metric segmentation evaluation: per-class IoU over a confusion
matrix, overall mIoU, and mIoU restricted to the frequent/common/rare class
splits at both image and pixel level.

The splits come from the *training* set's class statistics, so the report
measures how a model treats classes that were frequent or rare during
training, regardless of how the validation set is distributed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .dataset import DatasetIndex, LabelMap, load_label_map
from .errors import DataError, UndefinedMetricError
from .stats import ClassStats, split_classes


class ConfusionMatrix:
    """Pixel tally of (ground-truth class, predicted class) pairs.

    Ground-truth ignore pixels are skipped entirely. A predicted ignore id
    under a valid ground-truth label lands in a reserved void column: it
    adds a false negative for the true class without crediting any other
    class.
    """

    def __init__(self, num_classes: int, ignore_id: int):
        if num_classes < 1:
            raise DataError("num_classes must be >= 1")
        self.num_classes = num_classes
        self.ignore_id = ignore_id
        # one extra column for void (ignore-valued) predictions
        self.counts = np.zeros((num_classes, num_classes + 1), dtype=np.int64)

    def add(self, gt: LabelMap, pred: LabelMap) -> "ConfusionMatrix":
        if gt.class_ids.shape != pred.class_ids.shape:
            raise DataError(
                f"shape mismatch: gt {gt.class_ids.shape} vs pred {pred.class_ids.shape}"
            )
        g = gt.class_ids.ravel()
        p = pred.class_ids.ravel()
        valid = g != self.ignore_id
        g = g[valid]
        p = p[valid]
        if g.size == 0:
            return self
        if int(g.max()) >= self.num_classes or int(g.min()) < 0:
            raise DataError("ground-truth label out of range")
        p = np.where(p == self.ignore_id, self.num_classes, p)
        if int(p.max()) > self.num_classes or int(p.min()) < 0:
            raise DataError("predicted label out of range")
        width = self.num_classes + 1
        flat = np.bincount(g * width + p, minlength=self.num_classes * width)
        self.counts += flat.reshape(self.num_classes, width)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if (other.num_classes, other.ignore_id) != (self.num_classes, self.ignore_id):
            raise DataError("cannot merge confusion matrices with different class layouts")
        self.counts += other.counts
        return self

    def total_pixels(self) -> int:
        return int(self.counts.sum())

    def per_class_iou(self) -> list[float | None]:
        """IoU per class; None when the class appears in neither gt nor pred."""
        diag = np.diag(self.counts[:, : self.num_classes]).astype(np.float64)
        gt_sizes = self.counts.sum(axis=1).astype(np.float64)  # includes void column
        pred_sizes = self.counts[:, : self.num_classes].sum(axis=0).astype(np.float64)
        union = gt_sizes + pred_sizes - diag
        return [
            float(diag[c] / union[c]) if union[c] > 0 else None
            for c in range(self.num_classes)
        ]


def miou(cm: ConfusionMatrix, split: set[int] | frozenset[int] | None = None) -> float:
    """Mean IoU over all defined classes, optionally restricted to ``split``."""
    ious = cm.per_class_iou()
    scope = range(cm.num_classes) if split is None else sorted(split)
    values = [ious[c] for c in scope if ious[c] is not None]
    if not values:
        raise UndefinedMetricError("undefined mIoU: no class in scope appears in gt or pred")
    return float(np.mean(values))


@dataclass(frozen=True)
class EvalReport:
    """Overall mIoU plus the six split mIoUs (two modes x three groups).

    Split entries are None when no class of that split has a defined IoU.
    """

    per_class_iou: tuple[float | None, ...]
    miou: float
    image_level: dict[str, float | None]
    pixel_level: dict[str, float | None]

    def to_dict(self) -> dict:
        return {
            "miou": self.miou,
            "image_level": dict(self.image_level),
            "pixel_level": dict(self.pixel_level),
            "per_class_iou": list(self.per_class_iou),
        }


def build_confusion(pairs, num_classes: int, ignore_id: int,
                    threads: int = 1) -> ConfusionMatrix:
    """Accumulate a confusion matrix over (gt, pred) label-map pairs.

    With multiple threads the pairs are tallied in fixed chunks and merged
    in order; integer addition commutes, so the result is bit-identical for
    any thread count.
    """
    pairs = list(pairs)
    if threads <= 1 or len(pairs) < 2:
        cm = ConfusionMatrix(num_classes, ignore_id)
        for gt, pred in pairs:
            cm.add(gt, pred)
        return cm

    chunk_size = max(1, (len(pairs) + threads - 1) // threads)
    chunks = [pairs[i:i + chunk_size] for i in range(0, len(pairs), chunk_size)]

    def tally(chunk):
        part = ConfusionMatrix(num_classes, ignore_id)
        for gt, pred in chunk:
            part.add(gt, pred)
        return part

    cm = ConfusionMatrix(num_classes, ignore_id)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for part in pool.map(tally, chunks):
            cm.merge(part)
    return cm


def evaluate(gt_index: DatasetIndex, preds, train_stats: ClassStats,
             threads: int = 1, gt_root=None) -> EvalReport:
    """Score predictions against a ground-truth manifest.

    ``preds`` maps an image id to its predicted LabelMap (a mapping or a
    callable). ``train_stats`` must come from the training set; it defines
    the frequent/common/rare splits for both report modes. Ground-truth
    rasters are loaded from the index's recorded paths, resolved against
    ``gt_root`` when given.
    """
    if train_stats.num_classes != gt_index.num_classes:
        raise DataError(
            f"training stats have {train_stats.num_classes} classes, "
            f"ground truth has {gt_index.num_classes}"
        )
    lookup: Callable[[str], LabelMap]
    if isinstance(preds, Mapping):
        def lookup(image_id, _m=preds):
            try:
                return _m[image_id]
            except KeyError:
                raise DataError(f"no prediction for image {image_id!r}") from None
    else:
        lookup = preds

    def load_pair(rec):
        if rec.path is None:
            raise DataError(f"image {rec.image_id!r} has no raster path")
        path = rec.path if gt_root is None else f"{gt_root}/{rec.path}"
        gt = load_label_map(path, gt_index.ignore_id)
        if (gt.height, gt.width) != (rec.height, rec.width):
            raise DataError(f"image {rec.image_id!r}: raster does not match manifest dimensions")
        return gt, lookup(rec.image_id)

    pairs = [load_pair(rec) for rec in gt_index.images]
    cm = build_confusion(pairs, gt_index.num_classes, gt_index.ignore_id, threads=threads)
    return report_from_confusion(cm, train_stats)


def report_from_confusion(cm: ConfusionMatrix, train_stats: ClassStats) -> EvalReport:
    """Assemble the dual-metric report from an accumulated confusion matrix."""
    overall = miou(cm)
    levels = {}
    for mode in ("image", "pixel"):
        split = split_classes(train_stats, mode)
        entry: dict[str, float | None] = {}
        for key, classes in (
            ("miou_f", split.frequent),
            ("miou_c", split.common),
            ("miou_r", split.rare),
        ):
            try:
                entry[key] = miou(cm, classes)
            except UndefinedMetricError:
                entry[key] = None
        levels[mode] = entry
    return EvalReport(
        per_class_iou=tuple(cm.per_class_iou()),
        miou=overall,
        image_level=levels["image"],
        pixel_level=levels["pixel"],
    )
