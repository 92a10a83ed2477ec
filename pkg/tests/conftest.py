"""Shared synthetic fixtures: grids, analytic velocity fields, fake datasets.

Velocity fields are built from metric-consistent physical offsets
(x = dlon * meters-per-degree at the row's latitude, y = dlat * constant),
so analytic derivatives in meters match what the production metric
produces, up to the tiny cos(lat) variation of the small test domains.
"""

import numpy as np
import pytest

from oceanflow.grid import (
    EARTH_RADIUS_M,
    Axis,
    RectilinearGrid3D,
    ScalarField,
    VectorField,
)

DEG = np.pi / 180.0
DY_M = EARTH_RADIUS_M * DEG  # meters per degree latitude


def make_grid(nlon=32, nlat=32, ndepth=2, dlon=0.01, dlat=0.01,
              lon0=0.0, depths=None, land_mask=None):
    """Uniform-horizontal grid centred on the equator (lat symmetric)."""
    lon = lon0 + np.arange(nlon) * dlon
    lat = (np.arange(nlat) - (nlat - 1) / 2) * dlat
    if depths is None:
        depths = np.arange(ndepth) * 10.0
    return RectilinearGrid3D(
        Axis("lon", lon, "degrees_east"),
        Axis("lat", lat, "degrees_north"),
        Axis("depth", depths, "m"),
        land_mask,
    )


def physical_offsets(grid, clon, clat):
    """Meter offsets from (clon, clat): x is (nlon, nlat), y is (nlat,)."""
    lat = grid.lat.values
    dx_row = EARTH_RADIUS_M * DEG * np.cos(lat * DEG)  # per-degree, per row
    x = (grid.lon.values[:, None] - clon) * dx_row[None, :]
    y = (lat - clat) * DY_M
    return x, y


def tile_depth(arr2d, ndepth):
    return np.repeat(arr2d[:, :, None], ndepth, axis=2)


def make_vfield(grid, u2d, v2d, w2d=None):
    nd = len(grid.depth)
    w = tile_depth(w2d, nd) if w2d is not None else None
    return VectorField(grid, tile_depth(u2d, nd), tile_depth(v2d, nd), w)


def rotation_field(grid, omega, clon, clat):
    """Solid-body rotation u = -omega*y, v = omega*x (counterclockwise)."""
    x, y = physical_offsets(grid, clon, clat)
    u2d = np.broadcast_to(-omega * y[None, :], x.shape).copy()
    v2d = omega * x
    return make_vfield(grid, u2d, v2d)


def strain_field(grid, alpha, clon, clat):
    """Pure strain u = alpha*x, v = -alpha*y."""
    x, y = physical_offsets(grid, clon, clat)
    u2d = alpha * x
    v2d = np.broadcast_to(-alpha * y[None, :], x.shape).copy()
    return make_vfield(grid, u2d, v2d)


def rankine_field(grid, clon, clat, core_m, vmax, background=(0.0, 0.0)):
    """Rankine vortex: solid-body core, 1/r tail, plus uniform background."""
    x, y = physical_offsets(grid, clon, clat)
    yy = np.broadcast_to(y[None, :], x.shape)
    r = np.hypot(x, yy)
    with np.errstate(divide="ignore", invalid="ignore"):
        vtheta = np.where(r <= core_m, vmax * r / core_m, vmax * core_m / r)
        u2d = np.where(r > 0, -vtheta * yy / r, 0.0) + background[0]
        v2d = np.where(r > 0, vtheta * x / r, 0.0) + background[1]
    return make_vfield(grid, u2d, v2d)


def uniform_field(grid, u=0.1, v=0.0, w=None):
    shape = grid.shape
    warr = np.full(shape, w) if w is not None else None
    return VectorField(grid, np.full(shape, float(u)), np.full(shape, float(v)), warr)


class MemoryDataset:
    """Duck-typed stand-in for ingest.Dataset backed by in-memory arrays.

    fields_by_role maps role -> array of shape (T, nlon, nlat, ndepth).
    """

    def __init__(self, grid, time, fields_by_role, w_absent=None):
        self.grid = grid
        self.time = np.asarray(time, dtype=np.float64)
        self._fields = fields_by_role
        self.w_absent = "w" not in fields_by_role if w_absent is None else w_absent
        self.source = "<memory>"

    @property
    def variables(self):
        return tuple(self._fields)

    @property
    def n_times(self):
        return self.time.size

    def load_scalar(self, role, t):
        values = self._fields[role][t]
        return ScalarField(self.grid, role, values, np.isfinite(values))

    def load_vector(self, t):
        w = self._fields["w"][t] if "w" in self._fields else None
        return VectorField(self.grid, self._fields["u"][t], self._fields["v"][t], w)


class LazyDataset:
    """Dataset stand-in generating each timestep on demand (for big fixtures)."""

    def __init__(self, grid, time, make_scalar, roles=("salinity",)):
        self.grid = grid
        self.time = np.asarray(time, dtype=np.float64)
        self._make = make_scalar
        self._roles = tuple(roles)
        self.w_absent = True
        self.source = "<lazy>"

    @property
    def variables(self):
        return self._roles

    @property
    def n_times(self):
        return self.time.size

    def load_scalar(self, role, t):
        values = self._make(role, t)
        return ScalarField(self.grid, role, values, np.isfinite(values))


@pytest.fixture(scope="session")
def warm_kernels():
    """Compile the numba kernels once so timed tests measure runtime only."""
    from oceanflow import _kernels
    from oceanflow.tracer import IntegrationParams, Seed, integrate_streamline
    from oceanflow import topology

    grid = make_grid(8, 8)
    vf = rotation_field(grid, 1e-5, grid.lon.values[4], grid.lat.values[4])
    seed = Seed(pos := grid.node_position(6, 4, 0))
    integrate_streamline(vf, seed, IntegrationParams(step_length=200.0, max_steps=16))
    topology.persistence_of_minima(np.random.default_rng(0).random((8, 8)))
    return True
