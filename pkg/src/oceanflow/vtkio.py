"""Legacy ASCII VTK writers: polyline sets and rectilinear grids.

All writers emit deterministic text (%.9g floats), so identical inputs
give byte-identical files. Point coordinates are written as
(lon deg, lat deg, depth m positive down) throughout; viewers can scale
or flip the third axis as needed.
"""

from __future__ import annotations

import numpy as np

_HEADER = "# vtk DataFile Version 3.0\n{title}\nASCII\n"


def _fmt(x) -> str:
    return "%.9g" % float(x)


def _write_floats(f, values, per_line=9):
    values = np.asarray(values, dtype=np.float64).ravel()
    for start in range(0, values.size, per_line):
        f.write(" ".join(_fmt(v) for v in values[start:start + per_line]))
        f.write("\n")


def write_polylines(path, lines, title="field lines") -> None:
    """Write field lines as POLYDATA with per-vertex data arrays.

    lines is a sequence of FieldLine objects; time, speed, and any sampled
    scalars present on every line become POINT_DATA FIELD arrays.
    """
    lines = list(lines)
    npoints = sum(len(ln) for ln in lines)
    scalar_names = None
    for ln in lines:
        names = set(ln.scalars)
        scalar_names = names if scalar_names is None else (scalar_names & names)
    scalar_names = sorted(scalar_names or ())
    with open(path, "w") as f:
        f.write(_HEADER.format(title=title))
        f.write("DATASET POLYDATA\n")
        f.write(f"POINTS {npoints} float\n")
        for ln in lines:
            for v in ln.vertices:
                f.write(f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")
        total = sum(len(ln) + 1 for ln in lines)
        f.write(f"LINES {len(lines)} {total}\n")
        offset = 0
        for ln in lines:
            ids = " ".join(str(offset + i) for i in range(len(ln)))
            f.write(f"{len(ln)} {ids}\n")
            offset += len(ln)
        arrays = [("time", np.concatenate([ln.times for ln in lines]) if lines else []),
                  ("speed", np.concatenate([ln.speeds for ln in lines]) if lines else [])]
        for name in scalar_names:
            arrays.append((name, np.concatenate([ln.scalars[name] for ln in lines])))
        f.write(f"POINT_DATA {npoints}\n")
        f.write(f"FIELD trace_data {len(arrays)}\n")
        for name, values in arrays:
            f.write(f"{name} 1 {npoints} float\n")
            _write_floats(f, values)


def write_rectilinear(path, fields, title="gridded fields") -> None:
    """Write scalar fields sharing one grid as a RECTILINEAR_GRID dataset.

    fields maps array name -> ScalarField; invalid nodes are written as
    nan. Point order follows the VTK convention (x fastest), which for
    (lon, lat, depth)-indexed arrays is Fortran raveling.
    """
    fields = dict(fields)
    if not fields:
        raise ValueError("no fields to write")
    grid = next(iter(fields.values())).grid
    ni, nj, nk = grid.shape
    with open(path, "w") as f:
        f.write(_HEADER.format(title=title))
        f.write("DATASET RECTILINEAR_GRID\n")
        f.write(f"DIMENSIONS {ni} {nj} {nk}\n")
        f.write(f"X_COORDINATES {ni} float\n")
        _write_floats(f, grid.lon.values)
        f.write(f"Y_COORDINATES {nj} float\n")
        _write_floats(f, grid.lat.values)
        f.write(f"Z_COORDINATES {nk} float\n")
        _write_floats(f, grid.depth.values)
        f.write(f"POINT_DATA {ni * nj * nk}\n")
        f.write(f"FIELD grid_data {len(fields)}\n")
        for name in sorted(fields):
            fld = fields[name]
            if fld.grid.shape != grid.shape:
                raise ValueError("fields must share one grid")
            values = np.where(fld.valid, fld.values, np.nan)
            f.write(f"{name} 1 {ni * nj * nk} float\n")
            _write_floats(f, values.ravel(order="F"))


def write_rectilinear_2d(path, x_axis, y_axis, values, valid, name,
                         title="gridded map") -> None:
    """Write a 2D (x, y)-indexed map as a flat RECTILINEAR_GRID.

    Used for depth maps (lon, lat) and vertical slices (lat, depth);
    invalid entries become nan.
    """
    values = np.asarray(values, dtype=np.float64)
    nx, ny = values.shape
    with open(path, "w") as f:
        f.write(_HEADER.format(title=title))
        f.write("DATASET RECTILINEAR_GRID\n")
        f.write(f"DIMENSIONS {nx} {ny} 1\n")
        f.write(f"X_COORDINATES {nx} float\n")
        _write_floats(f, x_axis.values)
        f.write(f"Y_COORDINATES {ny} float\n")
        _write_floats(f, y_axis.values)
        f.write("Z_COORDINATES 1 float\n0\n")
        f.write(f"POINT_DATA {nx * ny}\n")
        f.write(f"FIELD map_data 1\n")
        f.write(f"{name} 1 {nx * ny} float\n")
        out = np.where(np.asarray(valid, dtype=bool), values, np.nan)
        _write_floats(f, out.ravel(order="F"))
