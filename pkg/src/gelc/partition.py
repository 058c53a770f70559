"""Augmented Turnbull partition and classic Turnbull innermost intervals.

Both constructions work on the same ordering of "pieces": for the sorted
distinct endpoint values ``v_0 < ... < v_{k-1}``, piece ``2t`` is the point
``{v_t}`` and piece ``2t + 1`` the open gap ``(v_t, v_{t+1})``.  Every
observed interval covers a contiguous run of pieces, so membership reduces
to integer range checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .families import ObservedInterval

__all__ = ["Partition", "build_partition", "classic_turnbull_intervals", "DEFAULT_DECIMALS"]

DEFAULT_DECIMALS = 12


@dataclass(frozen=True)
class Partition:
    """Ordered disjoint cells plus the n x m membership matrix ``kappa``.

    ``kappa[i, j]`` is true when cell ``j`` lies inside observation ``i``'s
    interval.
    """

    left: np.ndarray
    right: np.ndarray
    left_closed: np.ndarray
    right_closed: np.ndarray
    kappa: np.ndarray

    @property
    def m(self):
        return len(self.left)

    @property
    def n(self):
        return self.kappa.shape[0]

    @property
    def lengths(self):
        return self.right - self.left

    @property
    def is_point(self):
        return self.right == self.left

    @property
    def covered(self):
        """Cells lying inside at least one observation."""
        return self.kappa.any(axis=0)

    @property
    def cells(self):
        return [
            ObservedInterval(float(a), float(b), bool(lc), bool(rc))
            for a, b, lc, rc in zip(self.left, self.right, self.left_closed, self.right_closed)
        ]

    def cell_of(self, z):
        """Index of the cell containing ``z``, or -1."""
        for j, cell in enumerate(self.cells):
            if cell.contains(z):
                return j
        return -1


def _piece_ranges(intervals, decimals):
    if len(intervals) == 0:
        raise ValueError("at least one interval is required")
    lo = np.round(np.array([iv.left for iv in intervals], dtype=float), decimals)
    hi = np.round(np.array([iv.right for iv in intervals], dtype=float), decimals)
    lc = np.array([iv.left_closed for iv in intervals])
    rc = np.array([iv.right_closed for iv in intervals])
    exact = lo == hi
    lc = lc | exact
    rc = rc | exact
    values = np.unique(np.concatenate([lo, hi]))
    tl = np.searchsorted(values, lo)
    tr = np.searchsorted(values, hi)
    start = 2 * tl + np.where(lc, 0, 1)
    stop = 2 * tr + np.where(rc, 0, -1)
    return values, start, stop


def _piece_bounds(values, first, last):
    """Endpoints and openness of the union of pieces ``first..last``."""
    left = values[first // 2]
    left_closed = first % 2 == 0
    right = values[(last + 1) // 2]
    right_closed = last % 2 == 0
    return left, right, left_closed, right_closed


def _make_partition(values, runs, start, stop):
    first = np.array([r[0] for r in runs], dtype=int)
    last = np.array([r[1] for r in runs], dtype=int)
    left, right, lc, rc = _piece_bounds(values, first, last)
    kappa = (first[None, :] >= start[:, None]) & (last[None, :] <= stop[:, None])
    return Partition(
        np.asarray(left, dtype=float),
        np.asarray(right, dtype=float),
        np.asarray(lc, dtype=bool),
        np.asarray(rc, dtype=bool),
        kappa,
    )


def build_partition(intervals, decimals=DEFAULT_DECIMALS):
    """Split the covered range into the coarsest cells that every interval
    is a union of.

    Endpoints are rounded to ``decimals`` places before comparison.  Point
    cells appear wherever a point is covered differently from both its
    neighbouring gaps (exact observations, or closed endpoints meeting open
    ones).  Zero-length pieces covered by no interval are dropped; uncovered
    gaps between observations are kept as cells with an all-false
    ``kappa`` column.
    """
    values, start, stop = _piece_ranges(intervals, decimals)
    npieces = 2 * len(values) - 1
    boundary = np.zeros(npieces + 1, dtype=bool)
    boundary[0] = True
    boundary[start] = True
    boundary[stop + 1] = True
    cover = np.zeros(npieces + 1, dtype=int)
    np.add.at(cover, start, 1)
    np.add.at(cover, stop + 1, -1)
    cover = np.cumsum(cover)[:npieces]

    edges = np.flatnonzero(boundary[:npieces])
    runs = []
    for k, a in enumerate(edges):
        b = edges[k + 1] - 1 if k + 1 < len(edges) else npieces - 1
        if a == b and a % 2 == 0 and cover[a] == 0:
            continue
        runs.append((a, b))
    return _make_partition(values, runs, start, stop)


def classic_turnbull_intervals(intervals, decimals=DEFAULT_DECIMALS):
    """Turnbull's innermost intervals: a left endpoint immediately followed
    by a right endpoint in the merged endpoint order.

    ``kappa`` here holds Turnbull's membership indicators.
    """
    values, start, stop = _piece_ranges(intervals, decimals)
    # at equal piece index a start precedes an end
    events = sorted({(int(s), 0) for s in start} | {(int(e), 1) for e in stop})
    runs = [
        (a[0], b[0])
        for a, b in zip(events, events[1:])
        if a[1] == 0 and b[1] == 1
    ]
    return _make_partition(values, runs, start, stop)
