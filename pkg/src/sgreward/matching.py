"""Optimal bipartite matching between predicted and ground-truth objects.

The pair cost blends semantic distance between category embeddings, box
overlap, and dimension-normalized coordinate distance. The solver finds a
minimum-total-cost assignment (rectangular), then drops pairs whose own cost
exceeds the threshold. Ties between equally cheap assignments are broken
toward the lowest ground-truth index, then the lowest prediction index, so
downstream rewards are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .embeddings import EmbeddingSource, reward_sim
from .graph import BoundingBox, ObjectInstance, canonical_token


@dataclass(frozen=True)
class MatchConfig:
    """Weights for the semantic / overlap / proximity cost terms."""

    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    cost_threshold: float = 1.5

    def __post_init__(self):
        weights = (self.lambda1, self.lambda2, self.lambda3)
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValueError("lambdas must be non-negative with a positive sum")
        if self.cost_threshold < 0:
            raise ValueError("cost_threshold must be non-negative")


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[int, int], ...]
    unmatched_gt: tuple[int, ...]
    unmatched_pred: tuple[int, ...]

    def gt_to_pred(self) -> dict[int, int]:
        return {g: p for g, p in self.pairs}


def iou(a: BoundingBox, b: BoundingBox) -> float:
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def l1_norm(a: BoundingBox, b: BoundingBox, width: float, height: float) -> float:
    """Sum of corner coordinate offsets, x scaled by width and y by height."""
    return (abs(a.x1 - b.x1) / width + abs(a.x2 - b.x2) / width
            + abs(a.y1 - b.y1) / height + abs(a.y2 - b.y2) / height)


def match_cost(gt: ObjectInstance, pred: ObjectInstance, cfg: MatchConfig,
               source: EmbeddingSource, width: float, height: float) -> float:
    sim = reward_sim(source.embed(canonical_token(gt.category)),
                     source.embed(canonical_token(pred.category)))
    return (cfg.lambda1 * (1.0 - sim)
            + cfg.lambda2 * (1.0 - iou(gt.box, pred.box))
            + cfg.lambda3 * l1_norm(gt.box, pred.box, width, height))


def cost_matrix(gt_objects, pred_objects, cfg: MatchConfig, source: EmbeddingSource,
                width: float, height: float) -> np.ndarray:
    matrix = np.empty((len(gt_objects), len(pred_objects)), dtype=np.float64)
    for i, gt in enumerate(gt_objects):
        for j, pred in enumerate(pred_objects):
            matrix[i, j] = match_cost(gt, pred, cfg, source, width, height)
    return matrix


def _optimal_total(matrix: np.ndarray) -> float:
    rows, cols = linear_sum_assignment(matrix)
    return math.fsum(matrix[r, c] for r, c in zip(rows, cols))


def _optimum_is_unique(matrix: np.ndarray, pairs, best_total: float) -> bool:
    """True when no other assignment reaches ``best_total``.

    Every alternative assignment must avoid at least one pair of the found
    optimum, so it suffices to re-solve with each chosen cell forbidden
    (big-M, kept finite so the solver stays feasible) and compare totals.
    """
    k = len(pairs)
    if k == 0:
        return True
    big_m = 2.0 * k * (float(np.max(np.abs(matrix))) + 1.0)
    for i, j in pairs:
        saved = matrix[i, j]
        matrix[i, j] = big_m
        try:
            alt_total = _optimal_total(matrix)
        finally:
            matrix[i, j] = saved
        if alt_total == best_total:
            return False
    return True


def _canonical_assignment(matrix: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost assignment, lexicographically first under (gt, pred) order.

    Rows are fixed one at a time: a pair (i, j) is accepted when some optimal
    completion still achieves the global optimum with it. Total costs are
    compared with fsum, which is exact, so only true ties are treated as ties.
    A uniqueness pre-check skips the fixing pass in the common tie-free case.
    """
    n, m = matrix.shape
    if n == 0 or m == 0:
        return []
    rows, cols = linear_sum_assignment(matrix)
    base = sorted(zip(rows.tolist(), cols.tolist()))
    best_total = math.fsum(matrix[i, j] for i, j in base)
    if _optimum_is_unique(matrix, base, best_total):
        return base
    k = min(n, m)

    pairs: list[tuple[int, int]] = []
    fixed_cost: list[float] = []
    free_rows = list(range(n))
    free_cols = list(range(m))
    while len(pairs) < k:
        i = free_rows[0]
        chosen = None
        for j in free_cols:
            rest_rows = [r for r in free_rows if r != i]
            rest_cols = [c for c in free_cols if c != j]
            rest = matrix[np.ix_(rest_rows, rest_cols)]
            if min(len(rest_rows), len(rest_cols)) > 0:
                rows, cols = linear_sum_assignment(rest)
                rest_cells = [rest[r, c] for r, c in zip(rows, cols)]
            else:
                rest_cells = []
            total = math.fsum(fixed_cost + [matrix[i, j]] + rest_cells)
            if total == best_total:
                chosen = j
                break
        if chosen is None:
            # Row i stays unmatched in every optimum (possible only when n > m
            # and the optimum assigns other rows); move on.
            free_rows.pop(0)
            continue
        pairs.append((i, chosen))
        fixed_cost.append(matrix[i, chosen])
        free_rows.remove(i)
        free_cols.remove(chosen)
        if not free_rows or not free_cols:
            break
    return pairs


def solve_matching(gt_objects, pred_objects, cfg: MatchConfig, source: EmbeddingSource,
                   width: float, height: float) -> Matching:
    """Assign predictions to ground truth at minimum total cost, then filter.

    Pairs whose individual cost exceeds ``cfg.cost_threshold`` are dropped to
    the unmatched sets after the global optimum is found.
    """
    matrix = cost_matrix(gt_objects, pred_objects, cfg, source, width, height)
    return matching_from_matrix(matrix, cfg.cost_threshold)


def matching_from_matrix(matrix: np.ndarray, cost_threshold: float) -> Matching:
    matrix = np.array(matrix, dtype=np.float64, copy=True)
    pairs = [(g, p) for g, p in _canonical_assignment(matrix)
             if matrix[g, p] <= cost_threshold]
    pairs.sort()
    matched_gt = {g for g, _ in pairs}
    matched_pred = {p for _, p in pairs}
    return Matching(
        pairs=tuple(pairs),
        unmatched_gt=tuple(i for i in range(matrix.shape[0]) if i not in matched_gt),
        unmatched_pred=tuple(j for j in range(matrix.shape[1]) if j not in matched_pred),
    )
