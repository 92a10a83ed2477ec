"""Rectilinear spatial data model: non-uniform axes, masked fields, interpolation.

All fields live on a shared lon/lat/depth grid. Longitude and latitude are in
degrees, depth in meters positive down. Arrays are indexed ``(i, j, k)`` for
``(lon, lat, depth)``. Grids and fields are immutable after construction and
safe to share between any number of concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MaskedRegion, OutOfDomain, UnsortedAxis

EARTH_RADIUS_M = 6_371_000.0
DEG_TO_RAD = math.pi / 180.0


def meters_per_degree(lat_deg: float) -> tuple[float, float]:
    """Local metric (dx, dy) in meters per degree of lon/lat at a latitude.

    dy is constant on the sphere; dx shrinks with cos(lat) and degenerates
    to 0 at the poles.
    """
    dy = EARTH_RADIUS_M * DEG_TO_RAD
    dx = dy * math.cos(lat_deg * DEG_TO_RAD)
    return dx, dy


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Axis:
    """A strictly increasing 1D coordinate axis.

    Parameters
    ----------
    name : str
        Axis label ("lon", "lat", "depth", ...).
    values : array_like
        Coordinates, strictly increasing, length >= 2. Degrees for lon/lat,
        meters positive-down for depth.
    units : str
        Unit label, informational only.
    """

    name: str
    values: np.ndarray
    units: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 2:
            raise ValueError(f"axis {self.name!r} needs at least 2 values")
        if not np.all(np.diff(values) > 0):
            raise UnsortedAxis(f"axis {self.name!r} is not strictly increasing")
        object.__setattr__(self, "values", _freeze(values))

    def __len__(self) -> int:
        return self.values.size

    @property
    def bounds(self) -> tuple[float, float]:
        return float(self.values[0]), float(self.values[-1])


@dataclass(frozen=True)
class Position:
    """A point in grid coordinates: degrees lon/lat, meters depth (down)."""

    lon: float
    lat: float
    depth: float


@dataclass(frozen=True)
class RectilinearGrid3D:
    """Rectilinear lon/lat/depth grid with a land mask.

    ``land_mask[i, j, k]`` is True where the node is land (permanently
    invalid); shape must equal ``(len(lon), len(lat), len(depth))``.
    """

    lon: Axis
    lat: Axis
    depth: Axis
    land_mask: np.ndarray = None

    def __post_init__(self):
        shape = (len(self.lon), len(self.lat), len(self.depth))
        if self.land_mask is None:
            mask = np.zeros(shape, dtype=bool)
        else:
            mask = np.array(self.land_mask, dtype=bool)
            if mask.shape != shape:
                raise ValueError(f"land_mask shape {mask.shape} != grid shape {shape}")
        object.__setattr__(self, "land_mask", _freeze(mask))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (len(self.lon), len(self.lat), len(self.depth))

    def node_position(self, i: int, j: int, k: int) -> Position:
        return Position(
            float(self.lon.values[i]),
            float(self.lat.values[j]),
            float(self.depth.values[k]),
        )

    def horizontal_metric(self, j: int) -> tuple[float, float]:
        """(dx, dy) meters per degree at latitude row j."""
        return meters_per_degree(float(self.lat.values[j]))

    def contains(self, p: Position) -> bool:
        lo, hi = self.lon.bounds
        if not (lo <= p.lon <= hi):
            return False
        lo, hi = self.lat.bounds
        if not (lo <= p.lat <= hi):
            return False
        lo, hi = self.depth.bounds
        return lo <= p.depth <= hi


def _shared_valid(grid, values_list, valid):
    """Combine an optional user mask with finiteness and the land mask."""
    ok = ~grid.land_mask
    if valid is not None:
        v = np.array(valid, dtype=bool)
        if v.shape != grid.shape:
            raise ValueError("valid mask shape does not match grid")
        ok = ok & v
    for values in values_list:
        ok = ok & np.isfinite(values)
    return _freeze(ok)


@dataclass(frozen=True)
class ScalarField:
    """A scalar sampled at every grid node, with a validity mask.

    The stored ``valid`` mask is the intersection of the caller's mask, the
    grid's land mask, and finiteness of the values, so the two invariants
    (valid => finite, land => invalid) hold by construction.
    """

    grid: RectilinearGrid3D
    name: str
    values: np.ndarray
    valid: np.ndarray = None
    units: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "valid", _shared_valid(self.grid, [values], self.valid))


@dataclass(frozen=True)
class VectorField:
    """Horizontal (u, v) and optional vertical (w) velocity on one grid.

    u, v, w are in m/s and share a single validity mask. A missing w means
    the vertical component is unknown and treated as zero downstream.
    """

    grid: RectilinearGrid3D
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray = None
    valid: np.ndarray = None

    def __post_init__(self):
        u = np.array(self.u, dtype=np.float64)
        v = np.array(self.v, dtype=np.float64)
        if u.shape != self.grid.shape or v.shape != self.grid.shape:
            raise ValueError("velocity component shape does not match grid")
        comps = [u, v]
        w = self.w
        if w is not None:
            w = np.array(w, dtype=np.float64)
            if w.shape != self.grid.shape:
                raise ValueError("w shape does not match grid")
            comps.append(w)
            object.__setattr__(self, "w", _freeze(w))
        object.__setattr__(self, "u", _freeze(u))
        object.__setattr__(self, "v", _freeze(v))
        object.__setattr__(self, "valid", _shared_valid(self.grid, comps, self.valid))

    @property
    def has_w(self) -> bool:
        return self.w is not None


def _locate_axis(values: np.ndarray, x: float, name: str) -> tuple[int, float]:
    if not (values[0] <= x <= values[-1]):
        raise OutOfDomain(f"{name}={x} outside [{values[0]}, {values[-1]}]")
    i = int(np.searchsorted(values, x, side="right")) - 1
    if i > values.size - 2:  # x exactly on the last node
        i = values.size - 2
    frac = (x - values[i]) / (values[i + 1] - values[i])
    return i, float(frac)


def locate(grid: RectilinearGrid3D, p: Position):
    """Cell index and fractional offsets of a position.

    Returns ``((i, j, k), (fx, fy, fz))`` with ``p`` between nodes
    ``i..i+1, j..j+1, k..k+1`` and fractions in [0, 1]. A position exactly
    on a node coordinate gets fraction 0, except on the last node of an
    axis, where the cell is clamped and the fraction is 1. Binary search
    per axis, so non-uniform spacing is fine.

    Raises OutOfDomain when p is outside any axis range.
    """
    i, fx = _locate_axis(grid.lon.values, p.lon, "lon")
    j, fy = _locate_axis(grid.lat.values, p.lat, "lat")
    k, fz = _locate_axis(grid.depth.values, p.depth, "depth")
    return (i, j, k), (fx, fy, fz)


def _trilinear(cube: np.ndarray, fx: float, fy: float, fz: float) -> float:
    c00 = cube[0, 0, 0] * (1 - fz) + cube[0, 0, 1] * fz
    c01 = cube[0, 1, 0] * (1 - fz) + cube[0, 1, 1] * fz
    c10 = cube[1, 0, 0] * (1 - fz) + cube[1, 0, 1] * fz
    c11 = cube[1, 1, 0] * (1 - fz) + cube[1, 1, 1] * fz
    c0 = c00 * (1 - fy) + c01 * fy
    c1 = c10 * (1 - fy) + c11 * fy
    return float(c0 * (1 - fx) + c1 * fx)


def _nearest_valid_corner(ok: np.ndarray, fx: float, fy: float, fz: float):
    best = None
    best_d = np.inf
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                if not ok[a, b, c]:
                    continue
                d = (fx - a) ** 2 + (fy - b) ** 2 + (fz - c) ** 2
                if d < best_d:
                    best_d = d
                    best = (a, b, c)
    return best


def interpolate_scalar(f: ScalarField, p: Position, policy: str = "reject") -> float:
    """Trilinear interpolation of a masked scalar field at a position.

    policy controls what happens when the 8-node stencil touches invalid
    nodes: "reject" raises MaskedRegion; "nearest_valid" falls back to the
    value of the nearest valid corner (by fractional distance within the
    unit cell) and only raises when the whole cell is invalid.
    """
    (i, j, k), (fx, fy, fz) = locate(f.grid, p)
    cube = f.values[i : i + 2, j : j + 2, k : k + 2]
    ok = f.valid[i : i + 2, j : j + 2, k : k + 2]
    if ok.all():
        return _trilinear(cube, fx, fy, fz)
    if policy == "reject":
        raise MaskedRegion(f"invalid node in interpolation cell ({i},{j},{k})")
    if policy == "nearest_valid":
        corner = _nearest_valid_corner(ok, fx, fy, fz)
        if corner is None:
            raise MaskedRegion(f"no valid node in interpolation cell ({i},{j},{k})")
        return float(cube[corner])
    raise ValueError(f"unknown masked-node policy {policy!r}")


def interpolate_vector(
    vf: VectorField,
    p: Position,
    include_vertical: bool = False,
    policy: str = "reject",
) -> np.ndarray:
    """Componentwise trilinear interpolation of (u, v, w) at a position.

    The vertical component is forced to 0 when include_vertical is off or
    the field has no w.
    """
    (i, j, k), (fx, fy, fz) = locate(vf.grid, p)
    ok = vf.valid[i : i + 2, j : j + 2, k : k + 2]
    if not ok.all():
        if policy == "reject" or not ok.any():
            raise MaskedRegion(f"invalid node in interpolation cell ({i},{j},{k})")
        corner = _nearest_valid_corner(ok, fx, fy, fz)
        ii, jj, kk = i + corner[0], j + corner[1], k + corner[2]
        u = float(vf.u[ii, jj, kk])
        v = float(vf.v[ii, jj, kk])
        w = float(vf.w[ii, jj, kk]) if (include_vertical and vf.has_w) else 0.0
        return np.array([u, v, w])
    u = _trilinear(vf.u[i : i + 2, j : j + 2, k : k + 2], fx, fy, fz)
    v = _trilinear(vf.v[i : i + 2, j : j + 2, k : k + 2], fx, fy, fz)
    if include_vertical and vf.has_w:
        w = _trilinear(vf.w[i : i + 2, j : j + 2, k : k + 2], fx, fy, fz)
    else:
        w = 0.0
    return np.array([u, v, w])
