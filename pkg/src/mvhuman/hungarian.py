"""Minimum-cost assignment (shortest augmenting path with potentials).

Among equal-cost optimal assignments the lexicographically smallest row->column
vector is returned, so results do not depend on solver internals.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class Assignment(NamedTuple):
    cols: np.ndarray  # per row: matched column, or -1 if matched to padding
    cost: float


def _solve(c):
    """Square cost matrix -> (row->col array, row potentials, col potentials)."""
    n = c.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    rows = np.empty(n, dtype=int)
    rows[p[1:] - 1] = np.arange(n)
    return rows, u[1:], v[1:]


def _lexmin(c, tol):
    n = c.shape[0]
    rows_left = list(range(n))
    cols_left = list(range(n))
    sub_assign, u, v = _solve(c)
    out = np.empty(n, dtype=int)
    for i in range(n):
        sub = c[np.ix_(rows_left, cols_left)]
        best = sub_assign[0]
        opt = sub[np.arange(len(rows_left)), sub_assign].sum()
        reduced = sub[0] - u[0] - v
        chosen = None
        for jj in range(best):
            if reduced[jj] > tol:
                continue
            keep = [k for k in range(len(cols_left)) if k != jj]
            rest = sub[1:][:, keep]
            if rest.size:
                a2, u2, v2 = _solve(rest)
                val = sub[0, jj] + rest[np.arange(rest.shape[0]), a2].sum()
            else:
                a2, u2, v2 = np.empty(0, dtype=int), np.empty(0), np.empty(0)
                val = sub[0, jj]
            if val <= opt + tol:
                chosen = jj
                sub_assign, u, v = a2, u2, v2
                break
        if chosen is None:
            chosen = best
            keep = [k for k in range(len(cols_left)) if k != best]
            remap = {k: idx for idx, k in enumerate(keep)}
            sub_assign = np.array([remap[k] for k in sub_assign[1:]], dtype=int)
            u = u[1:]
            v = v[keep]
        out[rows_left[0]] = cols_left[chosen]
        rows_left.pop(0)
        cols_left.pop(chosen)
    return out


def hungarian_match(cost):
    """Optimal row->column assignment of a (possibly rectangular) cost matrix."""
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    r, c = cost.shape
    if r == 0 or c == 0:
        return Assignment(np.full(r, -1, dtype=int), 0.0)
    n = max(r, c)
    scale = float(np.abs(cost).max()) + 1.0
    sentinel = scale * (n + 1)
    square = np.full((n, n), sentinel)
    square[:r, :c] = cost
    tol = 1e-12 * n * (scale + sentinel * (r != c))
    cols = _lexmin(square, tol)[:r]
    cols = np.where(cols < c, cols, -1)
    real = cols >= 0
    return Assignment(cols, float(cost[np.arange(r)[real], cols[real]].sum()))
