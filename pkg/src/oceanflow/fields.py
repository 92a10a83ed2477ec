"""Derived scalar fields used for seeding weights and eddy detection.

All derivatives are central differences on the non-uniform spacing,
falling back to first-order one-sided stencils at domain and mask
borders. Horizontal derivatives convert degrees to meters with the
grid metric (dx scaled by cos(lat) row-wise), so vorticity and the
rotation/strain balance come out in SI units.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateAxis
from .grid import ScalarField, VectorField, meters_per_degree

DERIVED_FIELD_KINDS = (
    "speed",
    "speed_horizontal",
    "vorticity_z",
    "curl_magnitude",
    "okubo_weiss",
)


def derive(vf: VectorField, kind: str) -> ScalarField:
    """Compute one of DERIVED_FIELD_KINDS from a velocity field."""
    if kind == "speed":
        return speed(vf, include_vertical=True)
    if kind == "speed_horizontal":
        return speed(vf, include_vertical=False)
    if kind == "vorticity_z":
        return vorticity_z(vf)
    if kind == "curl_magnitude":
        return curl_magnitude(vf)
    if kind == "okubo_weiss":
        return okubo_weiss(vf)
    raise ValueError(f"unknown derived field kind {kind!r}")


def _directional_derivative(values, valid, coords, axis):
    """d(values)/d(coord) along one array axis with validity propagation.

    Central difference (v[i+1] - v[i-1]) / (c[i+1] - c[i-1]) where both
    neighbors are valid, one-sided difference where only one is, invalid
    where the node itself or both neighbors are invalid.
    """
    V = np.moveaxis(values, axis, 0)
    A = np.moveaxis(valid, axis, 0)
    n = V.shape[0]
    if n < 2:
        raise DegenerateAxis("need at least 2 nodes to differentiate")
    c = np.asarray(coords, dtype=np.float64).reshape((n,) + (1,) * (V.ndim - 1))
    up = np.zeros_like(A)
    up[:-1] = A[1:]
    dn = np.zeros_like(A)
    dn[1:] = A[:-1]
    dcen = np.full_like(V, np.nan)
    if n >= 3:
        dcen[1:-1] = (V[2:] - V[:-2]) / (c[2:] - c[:-2])
    dfwd = np.full_like(V, np.nan)
    dfwd[:-1] = (V[1:] - V[:-1]) / (c[1:] - c[:-1])
    dbwd = np.full_like(V, np.nan)
    dbwd[1:] = dfwd[:-1]
    with np.errstate(invalid="ignore"):
        out = np.where(up & dn, dcen, np.where(up, dfwd, dbwd))
    ok = A & (up | dn)
    out = np.where(ok, out, np.nan)
    return np.moveaxis(out, 0, axis), np.moveaxis(ok, 0, axis)


def _d_dx(values, valid, grid):
    """East derivative in 1/m: degree derivative scaled per latitude row."""
    d, ok = _directional_derivative(values, valid, grid.lon.values, 0)
    dx_per_deg = np.array([meters_per_degree(la)[0] for la in grid.lat.values])
    with np.errstate(divide="ignore", invalid="ignore"):
        d = d / dx_per_deg.reshape(1, -1, 1)
    return d, ok


def _d_dy(values, valid, grid):
    d, ok = _directional_derivative(values, valid, grid.lat.values, 1)
    _, dy_per_deg = meters_per_degree(0.0)
    return d / dy_per_deg, ok


def _d_ddepth(values, valid, grid):
    return _directional_derivative(values, valid, grid.depth.values, 2)


def speed(vf: VectorField, include_vertical: bool = False) -> ScalarField:
    """Flow speed sqrt(u^2 + v^2), plus w^2 when requested and present."""
    if include_vertical and vf.has_w:
        vals = np.sqrt(vf.u**2 + vf.v**2 + vf.w**2)
        name = "speed"
    else:
        vals = np.hypot(vf.u, vf.v)
        name = "speed_horizontal" if not include_vertical else "speed"
    vals = np.where(vf.valid, vals, np.nan)
    return ScalarField(vf.grid, name, vals, vf.valid, units="m s-1")


def vorticity_z(vf: VectorField) -> ScalarField:
    """Vertical vorticity dv/dx - du/dy on the horizontal metric."""
    dvdx, ok1 = _d_dx(vf.v, vf.valid, vf.grid)
    dudy, ok2 = _d_dy(vf.u, vf.valid, vf.grid)
    ok = ok1 & ok2
    vals = np.where(ok, dvdx - dudy, np.nan)
    return ScalarField(vf.grid, "vorticity_z", vals, ok, units="s-1")


def curl_magnitude(vf: VectorField) -> ScalarField:
    """|curl V| with all three components; |vorticity_z| when w is absent.

    The physical vertical coordinate points up while depth is stored
    positive down, so depth derivatives enter with flipped sign.
    """
    omega = vorticity_z(vf)
    if not vf.has_w:
        vals = np.where(omega.valid, np.abs(omega.values), np.nan)
        return ScalarField(vf.grid, "curl_magnitude", vals, omega.valid, units="s-1")
    dwdy, ok1 = _d_dy(vf.w, vf.valid, vf.grid)
    dvdd, ok2 = _d_ddepth(vf.v, vf.valid, vf.grid)
    dudd, ok3 = _d_ddepth(vf.u, vf.valid, vf.grid)
    dwdx, ok4 = _d_dx(vf.w, vf.valid, vf.grid)
    cx = dwdy + dvdd  # dw/dy - dv/dz, z up
    cy = -dudd - dwdx  # du/dz - dw/dx
    ok = ok1 & ok2 & ok3 & ok4 & omega.valid
    with np.errstate(invalid="ignore"):
        vals = np.sqrt(cx**2 + cy**2 + omega.values**2)
    vals = np.where(ok, vals, np.nan)
    return ScalarField(vf.grid, "curl_magnitude", vals, ok, units="s-1")


def okubo_weiss(vf: VectorField) -> ScalarField:
    """Strain/rotation balance s_n^2 + s_s^2 - omega^2.

    s_n = du/dx - dv/dy (normal strain), s_s = dv/dx + du/dy (shear
    strain). Negative values mark vorticity-dominated, eddy-like flow.
    """
    dudx, ok1 = _d_dx(vf.u, vf.valid, vf.grid)
    dvdy, ok2 = _d_dy(vf.v, vf.valid, vf.grid)
    dvdx, ok3 = _d_dx(vf.v, vf.valid, vf.grid)
    dudy, ok4 = _d_dy(vf.u, vf.valid, vf.grid)
    ok = ok1 & ok2 & ok3 & ok4
    with np.errstate(invalid="ignore"):
        s_n = dudx - dvdy
        s_s = dvdx + dudy
        omega = dvdx - dudy
        vals = s_n**2 + s_s**2 - omega**2
    vals = np.where(ok, vals, np.nan)
    return ScalarField(vf.grid, "okubo_weiss", vals, ok, units="s-2")
