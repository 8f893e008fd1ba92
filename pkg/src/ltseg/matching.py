"""Query-to-target assignment: one-to-one baseline, frequency-based
one-to-many matching, and the all-query semantic mask composition.

The one-to-one matcher is the classical minimum-cost bipartite assignment:
with m queries and n targets (n <= m), n queries are matched and the rest
receive no-object. The frequency-based matcher grants every target of class
c up to

    q_c = ceil(s * max(1, sqrt(t / p_c)))

query slots, where p_c is the class frequency and t, s are the threshold
and intensity hyperparameters: classes rarer than t receive more than
ceil(s) slots, increasingly so as frequency drops. Matching then runs on
the column-expanded cost matrix, so supervision concentrates on
low-frequency targets while remaining globally cost-optimal.

At inference every query contributes to every class mask:
``M_c = sum_i p_i[c] * mask_i``; the composed maps decode to a label raster
by per-pixel argmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dataset import LabelMap
from .errors import DataError

NO_OBJECT = None

_COST_TOL = 1e-9


def query_count(p_c: float, t: float, s: float) -> int:
    """Number of query slots granted to a target of a class with frequency ``p_c``.

    Non-increasing in ``p_c``, non-decreasing in ``t`` and ``s``, and never
    below ``ceil(s)`` (every class keeps at least the base intensity).
    """
    if not (0.0 < p_c <= 1.0):
        raise DataError(f"class frequency must lie in (0, 1], got {p_c}")
    if t <= 0.0:
        raise DataError(f"frequency threshold t must be positive, got {t}")
    if s < 1.0:
        raise DataError(f"intensity s must be >= 1, got {s}")
    return math.ceil(s * max(1.0, math.sqrt(t / p_c)))


@dataclass(frozen=True)
class MatchProblem:
    """One matching instance: costs, target classes, and class frequencies.

    ``cost`` has one row per query and one column per target (lower is
    better). ``class_frequency`` maps each class id appearing in
    ``target_classes`` to its frequency in (0, 1].
    """

    cost: np.ndarray
    target_classes: tuple[int, ...]
    class_frequency: dict[int, float]
    t: float
    s: float

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=np.float64)
        if cost.ndim != 2 or cost.shape[0] < 1 or cost.shape[1] < 1:
            raise DataError(f"cost must be a non-empty 2-D matrix, got shape {cost.shape}")
        if not np.all(np.isfinite(cost)):
            raise DataError("cost matrix contains non-finite entries")
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "target_classes", tuple(int(c) for c in self.target_classes))
        if len(self.target_classes) != cost.shape[1]:
            raise DataError(
                f"{len(self.target_classes)} target classes for {cost.shape[1]} cost columns"
            )
        for c in self.target_classes:
            if c not in self.class_frequency:
                raise DataError(f"no frequency recorded for class {c}")
            p = self.class_frequency[c]
            if not (0.0 < p <= 1.0):
                raise DataError(f"class {c}: frequency must lie in (0, 1], got {p}")

    @property
    def num_queries(self) -> int:
        return self.cost.shape[0]

    @property
    def num_targets(self) -> int:
        return self.cost.shape[1]


@dataclass(frozen=True)
class AssignmentResult:
    """A query-to-target matching.

    ``query_to_target[i]`` is the matched target index or ``NO_OBJECT``.
    ``multiplicity[j]`` counts the queries matched to target j (absent when
    zero). ``clamped`` is set when the requested per-target slots had to be
    reduced to fit the query budget.
    """

    query_to_target: tuple[int | None, ...]
    total_cost: float
    multiplicity: dict[int, int] = field(default_factory=dict)
    clamped: bool = False

    def matched_pairs(self) -> list[tuple[int, int]]:
        return [(q, t) for q, t in enumerate(self.query_to_target) if t is not NO_OBJECT]

    def to_dict(self) -> dict:
        return {
            "query_to_target": [t for t in self.query_to_target],
            "total_cost": self.total_cost,
            "multiplicity": {str(k): v for k, v in sorted(self.multiplicity.items())},
            "clamped": self.clamped,
        }


def hungarian(cost) -> AssignmentResult:
    """Minimum-cost one-to-one assignment of columns to rows.

    Requires at least as many rows (queries) as columns (targets); every
    column is matched and leftover rows receive no-object. Among cost-equal
    optima the lexicographically smallest ``query_to_target`` vector is
    returned, treating no-object as larger than any target index.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise DataError(f"cost must be 2-D, got shape {cost.shape}")
    m, k = cost.shape
    if k > m:
        raise DataError(f"more targets ({k}) than queries ({m})")
    if not np.all(np.isfinite(cost)):
        raise DataError("cost matrix contains non-finite entries")

    assignment = _lex_min_assignment(cost)
    total = math.fsum(cost[q, t] for q, t in enumerate(assignment) if t is not NO_OBJECT)
    multiplicity: dict[int, int] = {}
    for t in assignment:
        if t is not NO_OBJECT:
            multiplicity[t] = multiplicity.get(t, 0) + 1
    return AssignmentResult(tuple(assignment), total, multiplicity)


def _optimal_cost(cost: np.ndarray) -> float:
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def _lex_min_assignment(cost: np.ndarray) -> list[int | None]:
    """Fix rows in order to the smallest choice that preserves optimality.

    Choices per row are tried targets-ascending, then no-object, so the
    result is the lexicographically smallest optimal vector.
    """
    m, k = cost.shape
    best_total = _optimal_cost(cost)
    tol = _COST_TOL * max(1.0, abs(best_total))

    assignment: list[int | None] = []
    open_rows = list(range(m))
    open_cols = list(range(k))
    fixed_cost = 0.0
    for row in range(m):
        open_rows.remove(row)
        sub_rows = np.asarray(open_rows, dtype=np.int64)
        chosen = NO_OBJECT
        for col in open_cols:
            rest_cols = [c for c in open_cols if c != col]
            if len(rest_cols) > len(sub_rows):
                continue
            rest = (
                _optimal_cost(cost[np.ix_(sub_rows, np.asarray(rest_cols, dtype=np.int64))])
                if rest_cols
                else 0.0
            )
            if fixed_cost + cost[row, col] + rest <= best_total + tol:
                chosen = col
                break
        if chosen is NO_OBJECT:
            # feasible only while enough open rows remain for the open columns
            if len(open_cols) > len(sub_rows):
                raise AssertionError("no feasible lexicographic completion")  # pragma: no cover
        else:
            open_cols.remove(chosen)
            fixed_cost += float(cost[row, chosen])
        assignment.append(chosen)
    return assignment


def expand_targets(problem: MatchProblem) -> tuple[np.ndarray, list[int], bool]:
    """Replicate each target's cost column by its class's query count.

    Returns the expanded cost matrix, the column-to-original-target map, and
    a flag set when slot counts were clamped to fit the query budget: when
    the expansion exceeds the number of queries, the target whose class has
    the highest frequency loses slots first (ties: lowest target index),
    never dropping below one slot per target.
    """
    m, n = problem.num_queries, problem.num_targets
    if n > m:
        raise DataError(f"cannot match {n} targets with only {m} queries")
    counts = [
        query_count(problem.class_frequency[c], problem.t, problem.s)
        for c in problem.target_classes
    ]
    clamped = False
    while sum(counts) > m:
        clamped = True
        reducible = [j for j in range(n) if counts[j] > 1]
        j = max(reducible, key=lambda j: (problem.class_frequency[problem.target_classes[j]], -j))
        counts[j] -= 1

    column_map: list[int] = []
    for j, q in enumerate(counts):
        column_map.extend([j] * q)
    expanded = problem.cost[:, column_map]
    return expanded, column_map, clamped


def match_one_to_one(problem: MatchProblem) -> AssignmentResult:
    """Plain Hungarian matching on the problem's cost matrix."""
    if problem.num_targets > problem.num_queries:
        raise DataError(
            f"cannot match {problem.num_targets} targets with only {problem.num_queries} queries"
        )
    return hungarian(problem.cost)


def match_frequency_based(problem: MatchProblem) -> AssignmentResult:
    """One-to-many matching with per-class query counts.

    Runs the one-to-one matcher on the column-expanded matrix and folds the
    expanded columns back onto their original targets, so each target of
    class c collects up to q_c queries.
    """
    expanded, column_map, clamped = expand_targets(problem)
    raw = hungarian(expanded)
    query_to_target = tuple(
        column_map[t] if t is not NO_OBJECT else NO_OBJECT for t in raw.query_to_target
    )
    multiplicity: dict[int, int] = {}
    for t in query_to_target:
        if t is not NO_OBJECT:
            multiplicity[t] = multiplicity.get(t, 0) + 1
    return AssignmentResult(query_to_target, raw.total_cost, multiplicity, clamped)


# ---------------------------------------------------------------------------
# Inference-time mask composition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QueryOutput:
    """Per-query class probabilities and soft masks.

    ``class_probs`` is (num_queries, num_classes); rows are non-negative and
    may sum to less than one when some mass sits on a no-object slot that
    was already stripped. ``masks`` is (num_queries, height, width) with
    values in [0, 1].
    """

    class_probs: np.ndarray
    masks: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.class_probs, dtype=np.float64)
        masks = np.asarray(self.masks, dtype=np.float64)
        if probs.ndim != 2:
            raise DataError(f"class_probs must be 2-D, got shape {probs.shape}")
        if masks.ndim != 3:
            raise DataError(f"masks must be 3-D (query, height, width), got shape {masks.shape}")
        if probs.shape[0] != masks.shape[0]:
            raise DataError(
                f"{probs.shape[0]} probability rows vs {masks.shape[0]} masks"
            )
        if np.any(probs < 0):
            raise DataError("class probabilities must be non-negative")
        sums = probs.sum(axis=1)
        if np.any(sums > 1.0 + 1e-6):
            raise DataError("a class probability row sums to more than 1")
        object.__setattr__(self, "class_probs", probs)
        object.__setattr__(self, "masks", masks)

    @property
    def num_queries(self) -> int:
        return self.class_probs.shape[0]

    @property
    def num_classes(self) -> int:
        return self.class_probs.shape[1]


def compose_semantic(outputs: QueryOutput, class_id: int) -> np.ndarray:
    """Soft mask of one class: probability-weighted sum of all query masks."""
    if not (0 <= class_id < outputs.num_classes):
        raise DataError(f"class {class_id} out of range (C={outputs.num_classes})")
    return np.tensordot(outputs.class_probs[:, class_id], outputs.masks, axes=1)


def compose_all(outputs: QueryOutput) -> np.ndarray:
    """All class masks at once, shape (num_classes, height, width)."""
    return np.tensordot(outputs.class_probs.T, outputs.masks, axes=1)


def semantic_argmax(outputs: QueryOutput, ignore_id: int = 255) -> LabelMap:
    """Decode composed class masks to a label raster.

    Every pixel takes the class with the highest composed score; ties break
    toward the lowest class id (an all-zero pixel therefore decodes to
    class 0).
    """
    stacked = compose_all(outputs)
    labels = np.argmax(stacked, axis=0).astype(np.int64)
    return LabelMap(labels, ignore_id)
