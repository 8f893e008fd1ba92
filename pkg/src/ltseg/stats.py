"""Class-frequency statistics and the Gini long-tailedness measure.

Two weightings are supported for every class c:

* image-level: the number of images in which c occupies at least one pixel;
* pixel-level: the sum over images of the fraction of the image's pixels
  that belong to c.

The Gini coefficient of either weight vector quantifies how long-tailed the
dataset is (0 = perfectly balanced, approaching 1 = extremely long-tailed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .dataset import DatasetIndex
from .errors import DataError

Mode = Literal["image", "pixel"]

SPLIT_FREQUENT_CUM = 0.60
SPLIT_COMMON_CUM = 0.80


def image_level_weights(index: DatasetIndex) -> np.ndarray:
    """Number of images containing each class (exact integer vector of length C)."""
    weights = np.zeros(index.num_classes, dtype=np.int64)
    for rec in index.images:
        for c in rec.per_class_pixels:
            weights[c] += 1
    return weights


def pixel_level_weights(index: DatasetIndex) -> np.ndarray:
    """Per-class sum of per-image pixel fractions.

    Each image contributes S_c / (H * W) for every class it contains, summed
    in manifest order with compensated accumulation (``math.fsum``) so the
    result is independent of chunking and exactly reproducible.
    """
    contributions: list[list[float]] = [[] for _ in range(index.num_classes)]
    for rec in index.images:
        area = rec.num_pixels
        for c, count in rec.per_class_pixels.items():
            contributions[c].append(count / area)
    return np.array([math.fsum(parts) for parts in contributions], dtype=np.float64)


def gini(weights) -> float:
    """Gini coefficient of a non-negative weight vector.

    Defined as the mean absolute difference between all pairs divided by
    twice the mean: G = sum_ij |x_i - x_j| / (2 n^2 mean(x)). Computed via
    the equivalent sorted (Lorenz) form in O(n log n). The value lies in
    [0, (n-1)/n] and is invariant under permutation and positive scaling.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise DataError("gini requires a non-empty 1-D weight vector")
    if np.any(w < 0):
        raise DataError("gini requires non-negative weights")
    total = float(w.sum())
    if total == 0.0:
        raise DataError("gini undefined for an all-zero weight vector")
    n = w.size
    xs = np.sort(w)
    ranked = float(np.arange(1, n + 1, dtype=np.float64) @ xs)
    return 2.0 * ranked / (n * total) - (n + 1) / n


@dataclass(frozen=True)
class ClassStats:
    """Both weight distributions of a dataset plus their Gini coefficients."""

    image_weights: np.ndarray
    pixel_weights: np.ndarray
    gini_image: float
    gini_pixel: float
    num_images: int

    def __post_init__(self):
        if len(self.image_weights) != len(self.pixel_weights):
            raise DataError("weight vectors disagree on class count")

    @property
    def num_classes(self) -> int:
        return len(self.image_weights)

    def weights(self, mode: Mode) -> np.ndarray:
        _check_mode(mode)
        return self.image_weights if mode == "image" else self.pixel_weights

    def gini_of(self, mode: Mode) -> float:
        _check_mode(mode)
        return self.gini_image if mode == "image" else self.gini_pixel

    def to_dict(self) -> dict:
        return {
            "mode_agnostic": {
                "num_images": self.num_images,
                "num_classes": self.num_classes,
            },
            "image_level": {
                "weights": [int(w) for w in self.image_weights],
                "gini": self.gini_image,
            },
            "pixel_level": {
                "weights": [float(w) for w in self.pixel_weights],
                "gini": self.gini_pixel,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClassStats":
        try:
            return cls(
                image_weights=np.asarray(data["image_level"]["weights"], dtype=np.int64),
                pixel_weights=np.asarray(data["pixel_level"]["weights"], dtype=np.float64),
                gini_image=float(data["image_level"]["gini"]),
                gini_pixel=float(data["pixel_level"]["gini"]),
                num_images=int(data["mode_agnostic"]["num_images"]),
            )
        except KeyError as exc:
            raise DataError(f"stats JSON missing key {exc}") from None


def compute_stats(index: DatasetIndex) -> ClassStats:
    """Compute both weight vectors and both Gini coefficients of an index.

    Classes that never occur keep weight zero and still participate in the
    Gini computation (an absent class is the extreme tail).
    """
    img_w = image_level_weights(index)
    pix_w = pixel_level_weights(index)
    return ClassStats(
        image_weights=img_w,
        pixel_weights=pix_w,
        gini_image=gini(img_w),
        gini_pixel=gini(pix_w),
        num_images=index.num_images,
    )


@dataclass(frozen=True)
class FrequencySplit:
    """Partition of all class ids into frequent / common / rare sets."""

    mode: Mode
    frequent: frozenset[int]
    common: frozenset[int]
    rare: frozenset[int]

    def group_of(self, class_id: int) -> str:
        if class_id in self.frequent:
            return "frequent"
        if class_id in self.common:
            return "common"
        return "rare"

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "frequent": sorted(self.frequent),
            "common": sorted(self.common),
            "rare": sorted(self.rare),
        }


def ranked_classes(weights: np.ndarray) -> list[int]:
    """Class ids sorted by weight descending, ties broken by ascending id."""
    order = sorted(range(len(weights)), key=lambda c: (-weights[c], c))
    return order


def split_classes(stats: ClassStats, mode: Mode) -> FrequencySplit:
    """Assign each class to frequent / common / rare by cumulative weight mass.

    Classes are ranked by weight (descending, ascending id on ties). A class
    is frequent while the cumulative mass strictly before it is under 60% of
    the total, common while under 80%, and rare otherwise. Zero-weight
    classes are always rare.
    """
    weights = np.asarray(stats.weights(mode), dtype=np.float64)
    total = float(weights.sum())
    if total <= 0:
        raise DataError("cannot split classes: total weight is zero")
    frequent, common, rare = set(), set(), set()
    cum_before = 0.0
    for c in ranked_classes(weights):
        w = float(weights[c])
        if w == 0.0:
            rare.add(c)
        elif cum_before < SPLIT_FREQUENT_CUM * total:
            frequent.add(c)
        elif cum_before < SPLIT_COMMON_CUM * total:
            common.add(c)
        else:
            rare.add(c)
        cum_before += w
    return FrequencySplit(
        mode=mode,
        frequent=frozenset(frequent),
        common=frozenset(common),
        rare=frozenset(rare),
    )


def _check_mode(mode: str) -> None:
    if mode not in ("image", "pixel"):
        raise DataError(f"unknown mode {mode!r} (expected 'image' or 'pixel')")
