"""Vertical column sampling: depth profiles, slices, isosurface depth maps.

The needle samples at the grid's native depth levels (no vertical
resampling), with horizontal bilinear interpolation by default or
nearest-column snapping on request. Levels whose horizontal stencil
touches invalid nodes are flagged rather than silently extrapolated.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import OutOfDomain
from .grid import Axis

_BILINEAR = "bilinear"
_NEAREST = "nearest"


@dataclass
class DepthProfile:
    """One needle: per-level values of the requested variables."""

    lon: float
    lat: float
    time: float
    depth: np.ndarray
    columns: dict  # role -> per-level values (NaN where flagged)
    valid: dict  # role -> per-level flags

    def rows(self):
        roles = list(self.columns)
        yield ["depth", "time"] + roles
        for k in range(self.depth.size):
            row = [self.depth[k], self.time]
            for role in roles:
                row.append(self.columns[role][k] if self.valid[role][k] else "")
            yield row

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            csv.writer(f).writerows(self.rows())


@dataclass
class VerticalSlice:
    """A variable on the (lat, depth) plane at a fixed longitude."""

    lon: float
    time: float
    lat_axis: Axis
    depth_axis: Axis
    values: np.ndarray  # (nlat, ndepth)
    valid: np.ndarray


@dataclass
class DepthMap:
    """Per-column depths of a scalar crossing, absent columns flagged."""

    iso: float
    time: float
    lon_axis: Axis
    lat_axis: Axis
    depth: np.ndarray  # (nlon, nlat)
    valid: np.ndarray


def _column_weights(grid, lon, lat, mode):
    """Horizontal stencil (indices and weights) of the needle position."""
    lon_vals = grid.lon.values
    lat_vals = grid.lat.values
    if not (lon_vals[0] <= lon <= lon_vals[-1] and lat_vals[0] <= lat <= lat_vals[-1]):
        raise OutOfDomain(f"needle ({lon}, {lat}) outside grid")
    i = min(int(np.searchsorted(lon_vals, lon, side="right")) - 1, lon_vals.size - 2)
    j = min(int(np.searchsorted(lat_vals, lat, side="right")) - 1, lat_vals.size - 2)
    fx = (lon - lon_vals[i]) / (lon_vals[i + 1] - lon_vals[i])
    fy = (lat - lat_vals[j]) / (lat_vals[j + 1] - lat_vals[j])
    if mode == _NEAREST:
        i = i + (fx > 0.5)
        j = j + (fy > 0.5)
        return [(i, j, 1.0)]
    return [
        (i, j, (1 - fx) * (1 - fy)),
        (i + 1, j, fx * (1 - fy)),
        (i, j + 1, (1 - fx) * fy),
        (i + 1, j + 1, fx * fy),
    ]


def _sample_levels(field, stencil):
    """Per-level weighted values; a level is flagged when any stencil node
    with nonzero weight is invalid there."""
    nk = field.values.shape[2]
    vals = np.zeros(nk)
    ok = np.ones(nk, dtype=bool)
    for i, j, w in stencil:
        if w == 0.0:
            continue
        column_ok = field.valid[i, j, :]
        ok &= column_ok
        vals += np.where(column_ok, field.values[i, j, :], 0.0) * w
    return np.where(ok, vals, np.nan), ok


def depth_profile(dataset, lon: float, lat: float, t: int, roles=None,
                  nearest_column: bool = False) -> DepthProfile:
    """Sample variables down a vertical needle at (lon, lat).

    One row per native depth level; horizontal bilinear interpolation at
    each level (or the nearest grid column with nearest_column). Levels
    with land in the stencil are flagged masked.
    """
    roles = list(roles or dataset.variables)
    mode = _NEAREST if nearest_column else _BILINEAR
    stencil = _column_weights(dataset.grid, lon, lat, mode)
    columns = {}
    valid = {}
    for role in roles:
        f = dataset.load_scalar(role, t)
        columns[role], valid[role] = _sample_levels(f, stencil)
    return DepthProfile(lon, lat, float(dataset.time[t]),
                        dataset.grid.depth.values.copy(), columns, valid)


def vertical_slice(dataset, lon: float, t: int, role: str,
                   nearest_column: bool = False) -> VerticalSlice:
    """A variable on the (lat, depth) plane at one longitude.

    Interpolated between the two bracketing grid columns by default;
    nearest_column snaps to the closest one.
    """
    grid = dataset.grid
    lon_vals = grid.lon.values
    if not lon_vals[0] <= lon <= lon_vals[-1]:
        raise OutOfDomain(f"longitude {lon} outside grid")
    i = min(int(np.searchsorted(lon_vals, lon, side="right")) - 1, lon_vals.size - 2)
    fx = (lon - lon_vals[i]) / (lon_vals[i + 1] - lon_vals[i])
    f = dataset.load_scalar(role, t)
    if nearest_column:
        i = i + (fx > 0.5)
        values = f.values[i].copy()
        ok = f.valid[i].copy()
    else:
        ok = f.valid[i] & f.valid[i + 1]
        with np.errstate(invalid="ignore"):
            values = f.values[i] * (1 - fx) + f.values[i + 1] * fx
        values = np.where(ok, values, np.nan)
    return VerticalSlice(lon, float(dataset.time[t]), grid.lat, grid.depth,
                         values, ok)


def isosurface_depth(dataset, role: str, iso: float, t: int) -> DepthMap:
    """Shallowest depth where each column crosses the iso value.

    Linear interpolation between the bracketing levels; columns that never
    cross (or have no two adjacent valid levels doing so) are flagged
    absent.
    """
    f = dataset.load_scalar(role, t)
    v = f.values
    ok = f.valid
    ni, nj, nk = v.shape
    depth_vals = dataset.grid.depth.values
    out = np.full((ni, nj), np.nan)
    found = np.zeros((ni, nj), dtype=bool)
    for k in range(nk - 1):
        a = v[:, :, k]
        b = v[:, :, k + 1]
        pair_ok = ok[:, :, k] & ok[:, :, k + 1] & ~found
        with np.errstate(invalid="ignore"):
            crosses = pair_ok & ((a - iso) * (b - iso) <= 0)
        if not crosses.any():
            continue
        z0, z1 = depth_vals[k], depth_vals[k + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(b != a, (iso - a) / (b - a), 0.0)
        depth_here = z0 + np.clip(frac, 0.0, 1.0) * (z1 - z0)
        out = np.where(crosses, depth_here, out)
        found |= crosses
    return DepthMap(iso, float(dataset.time[t]), dataset.grid.lon,
                    dataset.grid.lat, out, found)
