"""Synthetic label-map dataset generator for desk-scale verification.

Each image is painted as vertical class strips (axis-aligned rectangles)
over an ignore-valued background. Image i always contains class ``i mod C``
(so every class appears at least once), plus extra classes drawn
independently with probability proportional to ``exp(-rank_decay * rank)``.
With ``rank_decay = 0`` all classes are equally likely and the dataset is
balanced; larger decay values produce increasingly long-tailed datasets.

Geometry carries no meaning beyond per-class pixel fractions, which are
drawn uniformly from [0.02, 0.4] per present class and rescaled when they
would exceed 95% of the image.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import (
    DEFAULT_IGNORE_8BIT,
    DEFAULT_IGNORE_16BIT,
    DatasetIndex,
    ImageRecord,
    LabelMap,
    save_label_map,
    write_manifest,
)
from .errors import DataError

# Expected number of extra (non-guaranteed) classes per image. Chosen so the
# default long-tailed profiles land in a mid-range Gini regime rather than
# saturating near 1.
EXTRA_CLASSES_PER_IMAGE = 1.3

MIN_CLASS_FRACTION = 0.02
MAX_CLASS_FRACTION = 0.40
MAX_COVERAGE = 0.95


@dataclass(frozen=True)
class SyntheticProfile:
    """Parameters controlling the shape of a generated dataset."""

    num_classes: int
    num_images: int
    rank_decay: float
    image_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise DataError("num_classes must be >= 2")
        if self.num_images < self.num_classes:
            raise DataError("num_images must be >= num_classes")
        if self.rank_decay < 0:
            raise DataError("rank_decay must be >= 0")
        if self.image_size < 8:
            raise DataError("image_size must be >= 8")

    @property
    def ignore_id(self) -> int:
        return DEFAULT_IGNORE_16BIT if self.num_classes > 255 else DEFAULT_IGNORE_8BIT


def _extra_class_probabilities(profile: SyntheticProfile) -> np.ndarray:
    ranks = np.arange(profile.num_classes, dtype=np.float64)
    propensity = np.exp(-profile.rank_decay * ranks)
    probs = EXTRA_CLASSES_PER_IMAGE * propensity / propensity.sum()
    return np.minimum(probs, 1.0)


def _plan_image(rng: np.random.Generator, profile: SyntheticProfile,
                image_index: int, extra_probs: np.ndarray) -> list[tuple[int, int]]:
    """Decide the (class_id, strip_width) layout of one image.

    The guaranteed class comes first so it can never be squeezed out when
    strip widths are reduced to fit the raster.
    """
    size = profile.image_size
    guaranteed = image_index % profile.num_classes
    extras = np.flatnonzero(rng.random(profile.num_classes) < extra_probs)
    present = [guaranteed] + [int(c) for c in extras if c != guaranteed]

    fractions = rng.uniform(MIN_CLASS_FRACTION, MAX_CLASS_FRACTION, size=len(present))
    total = fractions.sum()
    if total > MAX_COVERAGE:
        fractions *= MAX_COVERAGE / total

    widths = [max(1, round(f * size)) for f in fractions]
    while sum(widths) > size:
        widest = max(range(len(widths)), key=lambda i: (widths[i], -i))
        if widths[widest] == 1:
            widths = widths[: max(1, len(widths) - 1)]  # drop trailing class, keep guaranteed
            continue
        widths[widest] -= 1
    return list(zip(present[: len(widths)], widths))


def _plan_dataset(profile: SyntheticProfile) -> list[list[tuple[int, int]]]:
    rng = np.random.default_rng(profile.seed)
    extra_probs = _extra_class_probabilities(profile)
    return [
        _plan_image(rng, profile, i, extra_probs)
        for i in range(profile.num_images)
    ]


def _record_from_plan(profile: SyntheticProfile, image_index: int,
                      plan: list[tuple[int, int]], path: str | None) -> ImageRecord:
    size = profile.image_size
    counts: dict[int, int] = {}
    for class_id, width in plan:
        counts[class_id] = counts.get(class_id, 0) + width * size
    return ImageRecord(
        image_id=f"synth-{image_index:06d}",
        width=size,
        height=size,
        per_class_pixels=counts,
        path=path,
    )


def _paint(profile: SyntheticProfile, plan: list[tuple[int, int]]) -> LabelMap:
    size = profile.image_size
    arr = np.full((size, size), profile.ignore_id, dtype=np.int64)
    x0 = 0
    for class_id, width in plan:
        arr[:, x0:x0 + width] = class_id
        x0 += width
    return LabelMap(arr, profile.ignore_id)


def synthesize_index(profile: SyntheticProfile) -> DatasetIndex:
    """Build the dataset index in memory without writing any files.

    The counts are identical to what scanning the written rasters would
    produce; use :func:`generate_synthetic` when the files themselves are
    needed.
    """
    plans = _plan_dataset(profile)
    records = tuple(
        _record_from_plan(profile, i, plan, path=None)
        for i, plan in enumerate(plans)
    )
    return DatasetIndex(_dataset_name(profile), profile.num_classes, profile.ignore_id, records)


def generate_synthetic(profile: SyntheticProfile, out_dir: str | Path) -> DatasetIndex:
    """Write label-map PNGs plus a ``manifest.json`` under ``out_dir``.

    The same seed produces byte-identical rasters and manifest.
    """
    out = Path(out_dir)
    labels_dir = out / "labels"
    try:
        labels_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc

    plans = _plan_dataset(profile)
    records = []
    for i, plan in enumerate(plans):
        rel = f"labels/synth-{i:06d}.png"
        rec = _record_from_plan(profile, i, plan, path=rel)
        save_label_map(_paint(profile, plan), out / rel, profile.num_classes)
        records.append(rec)
    index = DatasetIndex(_dataset_name(profile), profile.num_classes, profile.ignore_id, tuple(records))
    write_manifest(index, out / "manifest.json")
    return index


def _dataset_name(profile: SyntheticProfile) -> str:
    return (
        f"synthetic-c{profile.num_classes}-n{profile.num_images}"
        f"-d{profile.rank_decay:g}-s{profile.seed}"
    )
