"""Greedy long-tailed subset sampling from a balanced dataset.

The sampler drives the Gini coefficient of a dataset up toward a target by
eliminating images. It fits an exponential-rank target weight profile whose
Gini equals the requested value, then walks the classes from lightest to
heaviest, removing images containing each class until the class weight drops
to its target, and reserving the survivors so later iterations cannot starve
the class. A rollback guard undoes any class iteration that would lower the
subset Gini, making the per-iteration Gini log non-decreasing by
construction.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .dataset import DatasetIndex, subset
from .errors import DataError, UnreachableTargetError
from .stats import ClassStats, Mode, compute_stats, gini, ranked_classes

STOP_TARGET = "target-reached"
STOP_THRESHOLD = "threshold-reached"
STOP_EXHAUSTED = "classes-exhausted"

_WEIGHT_EPS = 1e-12


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs of one sampling run.

    ``max_eliminated`` defaults to 70% of the dataset when left unset.
    ``seed`` is reserved for a future randomized removal order; the current
    removal order is fully deterministic.
    """

    target_gini: float
    mode: Mode = "image"
    max_eliminated: int | None = None
    profile_tolerance: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.target_gini < 1.0):
            raise DataError("target_gini must lie in (0, 1)")
        if self.max_eliminated is not None and self.max_eliminated < 0:
            raise DataError("max_eliminated must be >= 0")
        if self.mode not in ("image", "pixel"):
            raise DataError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class SamplerReport:
    """Outcome of a sampling run.

    ``iterations`` records one (class_id, removed_count, gini_after) triple
    per processed class; the gini values are non-decreasing. The achieved
    Gini fields are recomputed from the kept subset with the statistics
    module, so they match any later recomputation exactly.
    """

    kept_ids: tuple[str, ...]
    eliminated_count: int
    achieved_gini_image: float
    achieved_gini_pixel: float
    iterations: tuple[tuple[int, int, float], ...]
    stop_reason: str

    def to_dict(self) -> dict:
        return {
            "kept_ids": list(self.kept_ids),
            "eliminated_count": self.eliminated_count,
            "achieved_gini_image": self.achieved_gini_image,
            "achieved_gini_pixel": self.achieved_gini_pixel,
            "iterations": [[c, r, g] for c, r, g in self.iterations],
            "stop_reason": self.stop_reason,
        }


def exponential_profile_gini(decay: float, num_classes: int) -> float:
    """Gini of the weight vector exp(-decay * rank), rank = 0..C-1."""
    ranks = np.arange(num_classes, dtype=np.float64)
    return gini(np.exp(-decay * ranks))


def derive_target_distribution(stats: ClassStats, target_gini: float, mode: Mode,
                               profile_tolerance: float = 1e-4) -> np.ndarray:
    """Per-class target weights whose distribution has the requested Gini.

    The targets follow exp(-lambda * rank) over classes ranked by current
    weight (heaviest first), anchored at the current maximum class weight
    and capped at each class's current weight, since elimination can only
    shrink weights. Lambda is solved by bisection so the Gini of the capped
    target vector matches ``target_gini`` within ``profile_tolerance``; at
    lambda = 0 the capped vector equals the current weights, so targets
    degrade gracefully to "change almost nothing" as the requested Gini
    approaches the current one.
    """
    current = np.asarray(stats.weights(mode), dtype=np.float64)
    num_classes = len(current)
    current_gini = gini(current)
    if target_gini <= current_gini:
        raise UnreachableTargetError(
            f"target gini {target_gini:.6f} does not exceed current gini {current_gini:.6f}"
        )
    bound = (num_classes - 1) / num_classes
    if target_gini >= bound:
        raise UnreachableTargetError(
            f"unreachable target: gini of {num_classes} classes is bounded by "
            f"(C-1)/C = {bound:.6f}, requested {target_gini:.6f}"
        )

    ranks = np.empty(num_classes, dtype=np.int64)
    for rank, class_id in enumerate(ranked_classes(current)):
        ranks[class_id] = rank
    anchor = current.max()

    def capped_targets(lam: float) -> np.ndarray:
        return np.minimum(anchor * np.exp(-lam * ranks), current)

    lam = _solve_profile_decay(
        lambda lam: gini(capped_targets(lam)), target_gini, profile_tolerance
    )
    return capped_targets(lam)


def _solve_profile_decay(gini_of_decay, target_gini: float, tolerance: float) -> float:
    """Smallest decay whose Gini lands in [target, target + tolerance].

    Converging from above matters: a profile Gini even marginally below the
    target would make the target unreachable by removals alone.
    """
    lo, hi = 0.0, 1.0
    while gini_of_decay(hi) < target_gini:
        hi *= 2.0
        if hi > 1e6:  # pragma: no cover - bounded by the (C-1)/C check
            raise UnreachableTargetError("profile decay search diverged")
    for _ in range(200):
        if gini_of_decay(hi) - target_gini <= tolerance:
            break
        mid = 0.5 * (lo + hi)
        if gini_of_decay(mid) < target_gini:
            lo = mid
        else:
            hi = mid
    return hi


class _SubsetState:
    """Mutable view of the kept subset during sampling.

    Tracks, per class, the manifest positions and weight contributions of
    the images containing it; image-mode contributions are 1 per image,
    pixel-mode contributions are the per-image pixel fraction.
    """

    def __init__(self, index: DatasetIndex, mode: Mode):
        self.index = index
        self.mode = mode
        n = index.num_images
        self.kept = np.ones(n, dtype=bool)
        self.reserved = np.zeros(n, dtype=bool)
        self.image_classes: list[np.ndarray] = []
        self.image_values: list[np.ndarray] = []
        positions: list[list[int]] = [[] for _ in range(index.num_classes)]
        values: list[list[float]] = [[] for _ in range(index.num_classes)]
        for pos, rec in enumerate(index.images):
            classes = sorted(rec.per_class_pixels)
            area = rec.num_pixels
            vals = [1.0 if mode == "image" else rec.per_class_pixels[c] / area for c in classes]
            self.image_classes.append(np.asarray(classes, dtype=np.int64))
            self.image_values.append(np.asarray(vals, dtype=np.float64))
            for c, v in zip(classes, vals):
                positions[c].append(pos)
                values[c].append(v)
        self.class_positions = [np.asarray(p, dtype=np.int64) for p in positions]
        self.class_values = [np.asarray(v, dtype=np.float64) for v in values]
        self.kept_counts = np.array([len(p) for p in positions], dtype=np.int64)
        self.weights = self.exact_weights()

    def exact_weights(self) -> np.ndarray:
        """Recompute all class weights from the kept mask (compensated sums)."""
        out = np.empty(self.index.num_classes, dtype=np.float64)
        for c in range(self.index.num_classes):
            mask = self.kept[self.class_positions[c]]
            if self.mode == "image":
                out[c] = float(np.count_nonzero(mask))
            else:
                out[c] = math.fsum(self.class_values[c][mask])
        return out

    def remove(self, pos: int) -> None:
        self.kept[pos] = False
        self.weights[self.image_classes[pos]] -= self.image_values[pos]
        self.kept_counts[self.image_classes[pos]] -= 1

    def restore(self, pos: int) -> None:
        self.kept[pos] = True
        self.weights[self.image_classes[pos]] += self.image_values[pos]
        self.kept_counts[self.image_classes[pos]] += 1

    def removal_allowed(self, pos: int) -> bool:
        """An image may go only if every class it carries keeps another exemplar."""
        return bool(np.all(self.kept_counts[self.image_classes[pos]] >= 2))

    def removal_score(self, pos: int, active_class: int) -> float:
        """Priority of removing ``pos`` while processing ``active_class``.

        The score is the current weight of the rarest co-occurring class
        (infinite when the image carries no other class), so images whose
        removal depletes only frequent classes go first and collateral
        damage to the tail is minimized.
        """
        classes = self.image_classes[pos]
        others = classes[classes != active_class]
        if others.size == 0:
            return math.inf
        return float(self.weights[others].min())


def sample_lt(index: DatasetIndex, config: SamplerConfig) -> SamplerReport:
    """Carve a long-tailed subset out of ``index`` by greedy elimination.

    Classes are processed from lightest to heaviest (by original weight in
    the configured mode, ties by ascending class id). For each class, kept
    non-reserved images containing it are removed highest-score first until
    the class weight reaches its target, then all surviving images of the
    class are reserved. The run stops as soon as the subset Gini reaches the
    target, the elimination budget would be exceeded, or every class has
    been processed.
    """
    stats0 = compute_stats(index)
    targets = derive_target_distribution(
        stats0, config.target_gini, config.mode, config.profile_tolerance
    )
    budget = config.max_eliminated
    if budget is None:
        budget = int(0.7 * index.num_images)

    original = np.asarray(stats0.weights(config.mode), dtype=np.float64)
    class_order = sorted(range(index.num_classes), key=lambda c: (original[c], c))

    state = _SubsetState(index, config.mode)
    eliminated = 0
    gini_prev = gini(state.exact_weights())
    iterations: list[tuple[int, int, float]] = []
    stop_reason = STOP_EXHAUSTED

    for class_id in class_order:
        removed_positions, budget_blocked = _reduce_class(
            state, class_id, targets[class_id], budget - eliminated
        )

        gini_now = gini(state.exact_weights())
        if gini_now < gini_prev:
            for pos in removed_positions:
                state.restore(pos)
            removed_positions = []
            gini_now = gini_prev
        eliminated += len(removed_positions)

        kept_of_class = state.class_positions[class_id][state.kept[state.class_positions[class_id]]]
        state.reserved[kept_of_class] = True

        iterations.append((class_id, len(removed_positions), gini_now))
        gini_prev = gini_now

        if gini_now >= config.target_gini:
            stop_reason = STOP_TARGET
            break
        if budget_blocked:
            stop_reason = STOP_THRESHOLD
            break

    kept_ids = tuple(
        rec.image_id for pos, rec in enumerate(index.images) if state.kept[pos]
    )
    achieved = compute_stats(subset(index, kept_ids))
    return SamplerReport(
        kept_ids=kept_ids,
        eliminated_count=index.num_images - len(kept_ids),
        achieved_gini_image=achieved.gini_image,
        achieved_gini_pixel=achieved.gini_pixel,
        iterations=tuple(iterations),
        stop_reason=stop_reason,
    )


def _reduce_class(state: _SubsetState, class_id: int, target: float,
                  budget_left: int) -> tuple[list[int], bool]:
    """Remove images of ``class_id`` until its weight is at or below target.

    Returns the removed manifest positions plus a flag set when a removal
    had to be skipped because it would exceed the elimination budget.
    Candidates are drawn highest removal-score first (ties: ascending image
    id) from kept, non-reserved images; an image whose removal would leave
    any of its classes without a kept exemplar is never taken.
    """
    removed: list[int] = []
    positions = state.class_positions[class_id]
    candidates = positions[state.kept[positions] & ~state.reserved[positions]]

    # Scores only decrease while a heap is alive (weights shrink
    # monotonically between rollbacks), so lazy re-push is sound: a stale
    # entry re-enters with its refreshed, lower priority.
    heap: list[tuple[float, str, int]] = []
    for pos in candidates:
        score = state.removal_score(int(pos), class_id)
        heap.append((-score, state.index.images[pos].image_id, int(pos)))
    heapq.heapify(heap)

    while heap and state.weights[class_id] > target + _WEIGHT_EPS:
        neg_score, image_id, pos = heapq.heappop(heap)
        if not state.removal_allowed(pos):
            continue  # permanently blocked: kept counts only shrink here
        fresh = state.removal_score(pos, class_id)
        if -neg_score > fresh:
            heapq.heappush(heap, (-fresh, image_id, pos))
            continue
        if len(removed) + 1 > budget_left:
            return removed, True
        state.remove(pos)
        removed.append(pos)
    return removed, False
