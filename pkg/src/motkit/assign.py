"""Minimum-cost bipartite assignment on rectangular matrices with
infeasible cells.

Infeasible cells are marked with +inf. The solver first maximizes the
number of feasible matches, then minimizes total cost among those
matchings; `assignment` additionally breaks cost ties lexicographically
(lowest row index, then lowest column index).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DataError


def _as_cost_matrix(cost) -> np.ndarray:
    arr = np.asarray(cost, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"cost must be a 2-d matrix, got shape {arr.shape}")
    if np.isnan(arr).any() or np.isneginf(arr).any():
        raise DataError("cost cells must be finite or +inf (infeasible)")
    return arr


def min_cost_matching(cost) -> list[tuple[int, int]]:
    """Maximum-cardinality, then minimum-cost matching over feasible cells.

    Infeasible cells cost +inf. Returns (row, col) pairs sorted by row.
    """
    arr = _as_cost_matrix(cost)
    if arr.size == 0:
        return []
    feasible = np.isfinite(arr)
    if not feasible.any():
        return []
    # Replacing +inf with a penalty above twice the total feasible mass
    # makes scipy prefer one more feasible match over any cost saving, so
    # cardinality is maximized first and cost minimized second.
    penalty = 2.0 * math.fsum(np.abs(arr[feasible]).tolist()) + 1.0
    padded = np.where(feasible, arr, penalty)
    rows, cols = linear_sum_assignment(padded)
    return sorted(
        (int(r), int(c)) for r, c in zip(rows, cols) if feasible[r, c]
    )


def _total(arr: np.ndarray, pairs: list[tuple[int, int]]) -> float:
    return math.fsum(float(arr[r, c]) for r, c in pairs)


def assignment(cost) -> list[tuple[int, int]]:
    """min_cost_matching with deterministic tie-breaking.

    Among all matchings achieving the optimal (cardinality, total cost),
    returns the one whose sorted pair list is lexicographically smallest:
    each row in turn takes the smallest column consistent with optimality.
    """
    arr = _as_cost_matrix(cost)
    base = min_cost_matching(arr)
    if not base:
        return []
    best_size = len(base)
    best_total = _total(arr, base)

    n_rows, n_cols = arr.shape
    fixed: list[tuple[int, int]] = []
    fixed_cost: list[float] = []
    free_cols = list(range(n_cols))
    for row in range(n_rows):
        remaining_rows = range(row + 1, n_rows)
        chosen = None
        for col in free_cols:
            if not np.isfinite(arr[row, col]):
                continue
            sub_cols = [c for c in free_cols if c != col]
            sub = arr[np.ix_(list(remaining_rows), sub_cols)]
            completion = min_cost_matching(sub)
            if len(fixed) + 1 + len(completion) != best_size:
                continue
            total = math.fsum(
                fixed_cost
                + [float(arr[row, col])]
                + [float(sub[r, c]) for r, c in completion]
            )
            if total == best_total:
                chosen = col
                break
        if chosen is not None:
            fixed.append((row, chosen))
            fixed_cost.append(float(arr[row, chosen]))
            free_cols.remove(chosen)
            if len(fixed) == best_size:
                break
    return fixed
