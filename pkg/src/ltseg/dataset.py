"""Dataset data model: label rasters, per-image class counts, and manifest I/O.

A dataset is described by a JSON manifest pointing at single-channel PNG
label maps (8-bit for up to 255 classes, 16-bit beyond; the raw pixel value
is the class id). Loading a manifest scans every raster once and produces a
:class:`DatasetIndex`, the per-image/per-class pixel-count table that all
statistics are computed from. The scan result can be cached to JSON so
downstream steps never need to touch the rasters again.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .ioutil import atomic_path, write_json_atomic

DEFAULT_IGNORE_8BIT = 255
DEFAULT_IGNORE_16BIT = 65535


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel class-id raster for one image.

    ``class_ids`` is a (height, width) integer array; every entry must be a
    valid class id of the owning dataset or ``ignore_id``. Ignore pixels are
    excluded from all statistics and evaluation.
    """

    class_ids: np.ndarray
    ignore_id: int

    def __post_init__(self):
        arr = np.asarray(self.class_ids)
        if arr.ndim != 2:
            raise DataError(f"label map must be 2-D, got shape {arr.shape}")
        if arr.size == 0:
            raise DataError("label map has no pixels")
        object.__setattr__(self, "class_ids", arr)

    @property
    def height(self) -> int:
        return self.class_ids.shape[0]

    @property
    def width(self) -> int:
        return self.class_ids.shape[1]

    def class_pixel_counts(self, num_classes: int) -> dict[int, int]:
        """Count pixels per class id, skipping ignore pixels.

        Raises :class:`DataError` if any pixel holds an id that is neither a
        valid class (< ``num_classes``) nor ``ignore_id``.
        """
        flat = self.class_ids.ravel()
        valid = flat[flat != self.ignore_id]
        if valid.size and (int(valid.max()) >= num_classes or int(valid.min()) < 0):
            bad = valid[(valid >= num_classes) | (valid < 0)]
            raise DataError(f"label id {int(bad[0])} out of range (num_classes={num_classes})")
        counts = np.bincount(valid.astype(np.int64), minlength=num_classes)
        return {int(c): int(n) for c, n in enumerate(counts) if n > 0}


@dataclass(frozen=True)
class ImageRecord:
    """One image's identity, dimensions, and per-class pixel counts."""

    image_id: str
    width: int
    height: int
    per_class_pixels: dict[int, int]
    path: str | None = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DataError(f"image {self.image_id!r}: non-positive dimensions")
        total = sum(self.per_class_pixels.values())
        if total > self.width * self.height:
            raise DataError(
                f"image {self.image_id!r}: class pixel counts ({total}) exceed "
                f"image area ({self.width * self.height})"
            )
        for c, n in self.per_class_pixels.items():
            if n <= 0:
                raise DataError(f"image {self.image_id!r}: class {c} has non-positive count")

    @property
    def num_pixels(self) -> int:
        return self.width * self.height

    def contains(self, class_id: int) -> bool:
        return class_id in self.per_class_pixels


@dataclass(frozen=True)
class DatasetIndex:
    """Ordered per-image statistics table for a whole dataset.

    Iteration order is the manifest order; it anchors determinism for every
    downstream computation. Instances are immutable and safe to share
    across threads.
    """

    name: str
    num_classes: int
    ignore_id: int
    images: tuple[ImageRecord, ...]
    _by_id: dict[str, ImageRecord] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.num_classes < 1:
            raise DataError("num_classes must be >= 1")
        if not self.images:
            raise DataError("empty dataset")
        object.__setattr__(self, "images", tuple(self.images))
        by_id = {}
        for rec in self.images:
            if rec.image_id in by_id:
                raise DataError(f"duplicate image id {rec.image_id!r}")
            for c in rec.per_class_pixels:
                if not (0 <= c < self.num_classes):
                    raise DataError(
                        f"image {rec.image_id!r}: class id {c} out of range "
                        f"(num_classes={self.num_classes})"
                    )
            by_id[rec.image_id] = rec
        object.__setattr__(self, "_by_id", by_id)

    @property
    def num_images(self) -> int:
        return len(self.images)

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, image_id: str) -> ImageRecord:
        return self._by_id[image_id]

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._by_id

    def image_ids(self) -> list[str]:
        return [rec.image_id for rec in self.images]


def subset(index: DatasetIndex, keep_ids) -> DatasetIndex:
    """Restrict ``index`` to ``keep_ids``, preserving original relative order.

    Per-class counts are carried over untouched; no raster is rescanned.
    """
    keep = set(keep_ids)
    if not keep:
        raise DataError("empty keep set")
    unknown = keep - set(index.image_ids())
    if unknown:
        raise DataError(f"unknown image id(s): {sorted(unknown)[:5]}")
    kept = tuple(rec for rec in index.images if rec.image_id in keep)
    return DatasetIndex(index.name, index.num_classes, index.ignore_id, kept)


def rebase_paths(index: DatasetIndex, src_root: str | Path, dst_root: str | Path) -> DatasetIndex:
    """Rewrite raster paths so they resolve from ``dst_root`` instead of ``src_root``.

    Paths in a manifest or index cache are relative to the JSON file's own
    directory; writing one to a new location therefore requires rebasing.
    Absolute paths are kept as-is.
    """
    records = []
    for rec in index.images:
        if rec.path is None:
            raise DataError(f"image {rec.image_id!r} has no raster path; cannot rebase")
        p = Path(rec.path)
        new = rec.path if p.is_absolute() else os.path.relpath(Path(src_root) / p, dst_root)
        records.append(replace(rec, path=str(new)))
    return DatasetIndex(index.name, index.num_classes, index.ignore_id, tuple(records))


# ---------------------------------------------------------------------------
# Label-map raster I/O (single-channel PNG, pixel value = class id)
# ---------------------------------------------------------------------------

def load_label_map(path: str | Path, ignore_id: int) -> LabelMap:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img)
    except FileNotFoundError:
        raise DataError(f"label map not found: {path}") from None
    except Exception as exc:  # pillow raises a zoo of decode errors
        raise DataError(f"cannot read label map {path}: {exc}") from exc
    if arr.ndim != 2:
        raise DataError(f"label map {path} is not single-channel (shape {arr.shape})")
    return LabelMap(arr.astype(np.int64), ignore_id)


def save_label_map(label_map: LabelMap, path: str | Path, num_classes: int) -> None:
    """Write a label raster as 8-bit PNG when ids fit in a byte, else 16-bit."""
    arr = label_map.class_ids
    wide = num_classes > 255 or label_map.ignore_id > 255
    if wide:
        img = Image.fromarray(arr.astype(np.uint16), mode="I;16")
    else:
        img = Image.fromarray(arr.astype(np.uint8), mode="L")
    with atomic_path(path) as tmp:
        img.save(tmp, format="PNG")


# ---------------------------------------------------------------------------
# Manifest / index-cache JSON
# ---------------------------------------------------------------------------

def _scan_one(entry: dict, base: Path, num_classes: int, ignore_id: int) -> ImageRecord:
    image_id = entry["id"]
    raster_path = base / entry["path"]
    lm = load_label_map(raster_path, ignore_id)
    if lm.width != entry["width"] or lm.height != entry["height"]:
        raise DataError(
            f"image {image_id!r}: manifest says {entry['width']}x{entry['height']}, "
            f"raster is {lm.width}x{lm.height}"
        )
    try:
        counts = lm.class_pixel_counts(num_classes)
    except DataError as exc:
        raise DataError(f"image {image_id!r}: {exc}") from None
    return ImageRecord(
        image_id=image_id,
        width=lm.width,
        height=lm.height,
        per_class_pixels=counts,
        path=str(entry["path"]),
    )


def load_manifest(path: str | Path, threads: int = 1) -> DatasetIndex:
    """Load a manifest JSON and scan each referenced raster exactly once.

    Raster paths are resolved relative to the manifest file. Scanning may run
    on ``threads`` workers; results are merged in manifest order, so the
    returned index is identical regardless of thread count.
    """
    path = Path(path)
    data = _read_json(path)
    for key in ("name", "num_classes", "ignore_id", "images"):
        if key not in data:
            raise DataError(f"manifest {path}: missing key {key!r}")
    if not data["images"]:
        raise DataError("empty dataset")
    base = path.parent
    num_classes = int(data["num_classes"])
    ignore_id = int(data["ignore_id"])

    if "per_class_pixels" in data["images"][0]:
        return _index_from_cache_dict(data)

    entries = data["images"]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda e: _scan_one(e, base, num_classes, ignore_id), entries))
    else:
        records = [_scan_one(e, base, num_classes, ignore_id) for e in entries]
    return DatasetIndex(data["name"], num_classes, ignore_id, tuple(records))


def write_manifest(index: DatasetIndex, path: str | Path) -> None:
    """Write the manifest JSON (id/path/dimensions only, no counts)."""
    for rec in index.images:
        if rec.path is None:
            raise DataError(f"image {rec.image_id!r} has no raster path; cannot write manifest")
    payload = {
        "name": index.name,
        "num_classes": index.num_classes,
        "ignore_id": index.ignore_id,
        "images": [
            {"id": r.image_id, "path": r.path, "width": r.width, "height": r.height}
            for r in index.images
        ],
    }
    write_json_atomic(path, payload)


def index_to_cache_dict(index: DatasetIndex) -> dict:
    """Serialize an index including per-class pixel counts (no rescan needed to reload)."""
    return {
        "name": index.name,
        "num_classes": index.num_classes,
        "ignore_id": index.ignore_id,
        "images": [
            {
                "id": r.image_id,
                "path": r.path,
                "width": r.width,
                "height": r.height,
                "per_class_pixels": {str(c): n for c, n in sorted(r.per_class_pixels.items())},
            }
            for r in index.images
        ],
    }


def _index_from_cache_dict(data: dict) -> DatasetIndex:
    records = []
    for entry in data["images"]:
        records.append(
            ImageRecord(
                image_id=entry["id"],
                width=int(entry["width"]),
                height=int(entry["height"]),
                per_class_pixels={int(c): int(n) for c, n in entry["per_class_pixels"].items()},
                path=entry.get("path"),
            )
        )
    return DatasetIndex(data["name"], int(data["num_classes"]), int(data["ignore_id"]), tuple(records))


def load_index_cache(path: str | Path) -> DatasetIndex:
    """Load an index cache JSON (the ``stats --emit-index`` output)."""
    data = _read_json(Path(path))
    if not data.get("images"):
        raise DataError("empty dataset")
    if "per_class_pixels" not in data["images"][0]:
        raise DataError(f"{path} is a plain manifest, not an index cache; use load_manifest")
    return _index_from_cache_dict(data)


def _read_json(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise DataError(f"{path}: top-level JSON value must be an object")
    return data
