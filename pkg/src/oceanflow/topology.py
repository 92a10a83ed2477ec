"""Local minima and persistence-directed simplification of 2D scalar slices.

A slice is a 2D float array indexed (i, j) with flat index i * ncols + j,
plus an optional validity mask. Flat regions are resolved through the total
order (value, flat index): the minima test, the filtration, and all merges
use this order, so results are deterministic for any input, ties included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

_NEIGHBORS8 = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]


@dataclass(frozen=True)
class Minimum2D:
    """A local minimum of a slice; persistence is None until paired."""

    index: tuple[int, int]
    value: float
    persistence: float | None = None


def _check_slice(values, valid):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("slice must be 2D")
    if valid is None:
        valid = np.isfinite(values)
    else:
        valid = np.asarray(valid, dtype=bool) & np.isfinite(values)
    if not valid.any():
        raise ValueError("slice has no valid node")
    return values, valid


def _total_order(values, valid):
    """Valid flat indices sorted by (value, flat index), plus a rank array.

    Invalid nodes get the maximum rank so that vectorized neighbor
    comparisons treat them as never-smaller.
    """
    flat = values.ravel()
    order_all = np.argsort(flat, kind="stable")
    order = order_all[valid.ravel()[order_all]]
    rank = np.full(flat.size, np.iinfo(np.int64).max, dtype=np.int64)
    rank[order] = np.arange(order.size, dtype=np.int64)
    return order, rank.reshape(values.shape)


def local_minima(values, valid=None) -> list[Minimum2D]:
    """Nodes preceding all their valid 8-neighbors in the total order.

    Plateaus resolve by flat index, so a constant region contributes
    exactly one minimum (its lowest flat index). Invalid nodes are
    excluded from every neighborhood. Returned in flat-index order,
    persistence unset.
    """
    values, valid = _check_slice(values, valid)
    _, rank = _total_order(values, valid)
    ni, nj = values.shape
    is_min = valid.copy()
    big = np.iinfo(np.int64).max
    for di, dj in _NEIGHBORS8:
        shifted = np.full_like(rank, big)
        src = (slice(max(0, -di), ni - max(0, di)), slice(max(0, -dj), nj - max(0, dj)))
        dst = (slice(max(0, di), ni - max(0, -di)), slice(max(0, dj), nj - max(0, -dj)))
        shifted[dst] = rank[src]
        is_min &= rank < shifted
    out = []
    for i, j in zip(*np.nonzero(is_min)):
        out.append(Minimum2D((int(i), int(j)), float(values[i, j])))
    return out


def persistence_of_minima(values, valid=None) -> list[Minimum2D]:
    """Local minima with persistence from the sublevel-set filtration.

    Valid nodes are swept in the total order; 8-connected components are
    merged with a union-find. When two components meet at a node s, the
    component born at the higher minimum dies with persistence
    value(s) - value(minimum). The surviving minimum of each maximal
    connected valid region gets infinite persistence.
    """
    values, valid = _check_slice(values, valid)
    order, _ = _total_order(values, valid)
    ni, nj = values.shape
    is_min, pers = _kernels.sublevel_filtration(order, values.ravel(), ni, nj)
    out = []
    for flat in np.nonzero(is_min)[0]:
        i, j = divmod(int(flat), nj)
        out.append(Minimum2D((i, j), float(values[i, j]), float(pers[flat])))
    return out


def simplify_minima(minima, threshold: float) -> list[Minimum2D]:
    """Keep minima with persistence >= threshold; infinite always survives."""
    out = []
    for m in minima:
        if m.persistence is None:
            raise ValueError("minima must carry persistence; run persistence_of_minima first")
        if math.isinf(m.persistence) or m.persistence >= threshold:
            out.append(m)
    return out
