"""Dataset ingest: NetCDF classic files and a raw float32 bundle format.

Both backends normalize to one in-memory convention: axes strictly
ascending, depth in meters positive down, per-timestep arrays indexed
(lon, lat, depth). The land mask is derived from the fill values of the
first mapped variable at the first timestep. Datasets are read-only after
open and safe to read from concurrent workers.

The raw format is a JSON header (axes, dims, variable list, fill value)
next to one little-endian float32 file per variable, laid out in
(time, depth, lat, lon) order. It round-trips bit-exactly and needs no
NetCDF tooling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.io import netcdf_file

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import (
    DimensionMismatch,
    EmptySubset,
    MissingVariable,
    TimestepOutOfRange,
    UnsortedAxis,
)
from .grid import Axis, RectilinearGrid3D, ScalarField, VectorField

ROLES = ("salinity", "temperature", "u", "v", "w")
AXIS_KEYS = ("lon", "lat", "depth", "time")
DEFAULT_FILL = 9.96921e36  # netCDF float default
RAW_FORMAT_NAME = "oceanflow-raw"

_UNITS = {
    "salinity": "psu",
    "temperature": "degC",
    "u": "m s-1",
    "v": "m s-1",
    "w": "m s-1",
}


@dataclass(frozen=True)
class VariableMap:
    """File names for the axis dimensions and the physical variables.

    Axis names are required; physical roles are optional except that
    loading velocity needs u and v. fill_value overrides the file's own
    fill attribute.
    """

    lon: str = "longitude"
    lat: str = "latitude"
    depth: str = "depth"
    time: str = "time"
    salinity: str | None = None
    temperature: str | None = None
    u: str | None = None
    v: str | None = None
    w: str | None = None
    fill_value: float | None = None

    def __post_init__(self):
        named = [getattr(self, key) for key in AXIS_KEYS + ROLES if getattr(self, key)]
        if len(named) != len(set(named)):
            raise ValueError("duplicate file variable in variable map")

    def mapped_roles(self) -> dict[str, str]:
        return {role: getattr(self, role) for role in ROLES if getattr(self, role)}

    @classmethod
    def nemo(cls) -> "VariableMap":
        """Defaults matching NEMO-style reanalysis files."""
        return cls(salinity="so", temperature="thetao", u="uo", v="vo", w="wo")

    @classmethod
    def from_table(cls, table: dict) -> "VariableMap":
        kwargs = {}
        for key, value in table.items():
            if key == "fill_value":
                kwargs[key] = float(value)
            elif key in AXIS_KEYS + ROLES:
                kwargs[key] = str(value)
            else:
                raise ValueError(f"unknown variable-map key {key!r}")
        return cls(**kwargs)

    @classmethod
    def from_config(cls, path) -> "VariableMap":
        """Read the [variables] table of a TOML config file."""
        with open(path, "rb") as f:
            cfg = tomllib.load(f)
        return cls.from_table(cfg.get("variables", cfg))


def _normalize_axis(name, values, depth=False):
    """Ascending axis values plus a flip flag; depth becomes positive-down."""
    values = np.asarray(values, dtype=np.float64).copy()
    if depth and values.size and np.all(values <= 0):
        values = -values
    flipped = False
    if values.size > 1 and np.all(np.diff(values) < 0):
        values = values[::-1].copy()
        flipped = True
    return values, flipped


class _NetcdfStore:
    """Classic (NetCDF-3) backend via scipy; values in (time, depth, lat, lon)."""

    def __init__(self, path, varmap, strict=True):
        self._nc = netcdf_file(str(path), "r", mmap=False)
        self._varmap = varmap
        for key in AXIS_KEYS:
            if getattr(varmap, key) not in self._nc.variables:
                raise MissingVariable(f"axis variable {getattr(varmap, key)!r} not in file")
        self._transpose = {}
        self._flips = {}
        self._fills = {}
        self.present_roles = {}
        axis_dims = tuple(getattr(varmap, key) for key in ("time", "depth", "lat", "lon"))
        for role, name in varmap.mapped_roles().items():
            if name not in self._nc.variables:
                # vertical velocity is optional and its absence only recorded;
                # other roles are required when the map was given explicitly
                if role == "w" or not strict:
                    continue
                raise MissingVariable(f"variable {name!r} (role {role}) not in file")
            var = self._nc.variables[name]
            if sorted(var.dimensions) != sorted(axis_dims):
                raise DimensionMismatch(
                    f"{name!r} has dims {var.dimensions}, expected a permutation of {axis_dims}")
            self._transpose[name] = tuple(var.dimensions.index(d) for d in axis_dims)
            self._fills[name] = self._fill_of(var)
            self.present_roles[role] = name

    def _fill_of(self, var):
        if self._varmap.fill_value is not None:
            return float(self._varmap.fill_value)
        for att in ("_FillValue", "missing_value"):
            if hasattr(var, att):
                return float(np.asarray(getattr(var, att)).ravel()[0])
        return None

    def read_axis(self, key):
        values = np.asarray(self._nc.variables[getattr(self._varmap, key)][:])
        values, flipped = _normalize_axis(key, values, depth=(key == "depth"))
        self._flips[key] = flipped
        return values

    def read(self, name, t):
        var = self._nc.variables[name]
        raw = np.asarray(var[:]).transpose(self._transpose[name])[t]  # (depth, lat, lon)
        fill = self._fills[name]
        values = raw.astype(np.float64)
        if fill is not None:
            values[raw == np.asarray(fill, dtype=raw.dtype)] = np.nan
        arr = values.transpose(2, 1, 0)  # (lon, lat, depth)
        if self._flips.get("lon"):
            arr = arr[::-1]
        if self._flips.get("lat"):
            arr = arr[:, ::-1]
        if self._flips.get("depth"):
            arr = arr[:, :, ::-1]
        return np.ascontiguousarray(arr)

    def read_time(self):
        return np.asarray(self._nc.variables[self._varmap.time][:], dtype=np.float64)

    def close(self):
        self._nc.close()


class _RawStore:
    """Raw float32 bundle backend: JSON header plus one file per variable."""

    def __init__(self, header_path):
        header_path = Path(header_path)
        with open(header_path) as f:
            self.header = json.load(f)
        if self.header.get("format") != RAW_FORMAT_NAME:
            raise DimensionMismatch(f"{header_path} is not a {RAW_FORMAT_NAME} header")
        dims = self.header["dims"]
        self._shape = (dims["time"], dims["depth"], dims["lat"], dims["lon"])
        self.fill = float(self.header["fill_value"])
        self._files = {}
        for name, rel in self.header["variables"].items():
            fpath = header_path.parent / rel
            if not fpath.exists():
                raise MissingVariable(f"raw data file {fpath} missing")
            data = np.fromfile(fpath, dtype="<f4")
            if data.size != int(np.prod(self._shape)):
                raise DimensionMismatch(
                    f"{fpath} holds {data.size} values, expected {np.prod(self._shape)}")
            self._files[name] = data.reshape(self._shape)

    def read_axis(self, key):
        values, _ = _normalize_axis(key, self.header["axes"][key], depth=(key == "depth"))
        return values

    def read(self, name, t):
        raw = self._files[name][t]
        values = raw.astype(np.float64)
        values[(raw == np.float32(self.fill)) | np.isnan(raw)] = np.nan
        return np.ascontiguousarray(values.transpose(2, 1, 0))

    def close(self):
        self._files.clear()


class Dataset:
    """A time series of masked fields on one rectilinear grid.

    Holds the (possibly subset) grid, the time values, and a read handle;
    per-timestep loads are independent and never mutate the source files.
    """

    def __init__(self, store, roles, lon, lat, depth, time, land_mask, w_absent,
                 window=None, t_offset=0, source=""):
        self._store = store
        self._roles = dict(roles)  # role -> file variable name
        self.grid = RectilinearGrid3D(
            Axis("lon", lon, "degrees_east"),
            Axis("lat", lat, "degrees_north"),
            Axis("depth", depth, "m"),
            land_mask,
        )
        time = np.asarray(time, dtype=np.float64)
        if time.size > 1 and not np.all(np.diff(time) > 0):
            raise UnsortedAxis("time values are not strictly increasing")
        self.time = time
        self.w_absent = w_absent
        self._window = window or (slice(None), slice(None), slice(None))
        self._t_offset = t_offset
        self.source = source

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(self._roles)

    @property
    def n_times(self) -> int:
        return self.time.size

    def _check_t(self, t):
        t = int(t)
        if not 0 <= t < self.n_times:
            raise TimestepOutOfRange(f"timestep {t} outside [0, {self.n_times})")
        return t

    def load_scalar(self, role: str, t: int) -> ScalarField:
        """Load one variable at one timestep; fill values become invalid."""
        t = self._check_t(t)
        if role not in self._roles:
            raise MissingVariable(f"role {role!r} not in dataset ({self.variables})")
        full = self._store.read(self._roles[role], t + self._t_offset)
        values = full[self._window]
        return ScalarField(self.grid, role, values, np.isfinite(values),
                           units=_UNITS.get(role, ""))

    def load_vector(self, t: int) -> VectorField:
        """Load velocity at one timestep; w is optional (absent => None)."""
        t = self._check_t(t)
        for role in ("u", "v"):
            if role not in self._roles:
                raise MissingVariable(f"velocity needs mapped {role!r}")
        u = self._store.read(self._roles["u"], t + self._t_offset)[self._window]
        v = self._store.read(self._roles["v"], t + self._t_offset)[self._window]
        w = None
        if "w" in self._roles:
            w = self._store.read(self._roles["w"], t + self._t_offset)[self._window]
        return VectorField(self.grid, u, v, w)

    def subset(self, lon_range=None, lat_range=None, depth_range=None,
               time_range=None) -> "Dataset":
        """Crop to closed coordinate ranges; indices restart at the new origin."""

        def cut(values, rng, name):
            if rng is None:
                return 0, values.size
            lo, hi = rng
            a = int(np.searchsorted(values, lo, side="left"))
            b = int(np.searchsorted(values, hi, side="right"))
            if b - a < 1 or (values is not self.time and b - a < 2):
                raise EmptySubset(f"{name} range {rng} selects {b - a} nodes")
            return a, b

        i0, i1 = cut(self.grid.lon.values, lon_range, "lon")
        j0, j1 = cut(self.grid.lat.values, lat_range, "lat")
        k0, k1 = cut(self.grid.depth.values, depth_range, "depth")
        t0, t1 = cut(self.time, time_range, "time")
        w0, w1, w2 = self._window
        window = (
            _compose(w0, i0, i1),
            _compose(w1, j0, j1),
            _compose(w2, k0, k1),
        )
        return Dataset(
            self._store,
            self._roles,
            self.grid.lon.values[i0:i1],
            self.grid.lat.values[j0:j1],
            self.grid.depth.values[k0:k1],
            self.time[t0:t1],
            self.grid.land_mask[i0:i1, j0:j1, k0:k1],
            self.w_absent,
            window=window,
            t_offset=self._t_offset + t0,
            source=self.source,
        )

    def close(self):
        self._store.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _compose(outer: slice, a: int, b: int) -> slice:
    start = (outer.start or 0) + a
    return slice(start, start + (b - a))


def _is_raw(path: Path) -> bool:
    if path.is_dir():
        return (path / "header.json").exists()
    return path.suffix == ".json"


def open_dataset(path, varmap: VariableMap | None = None) -> Dataset:
    """Open a NetCDF classic file or a raw bundle as a Dataset.

    Axes are normalized (ascending, depth positive-down) and the land mask
    is derived from the fill values of the first mapped variable at t=0.
    Raw bundles name their variables by role, so varmap only applies to
    NetCDF input.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if _is_raw(path):
        header = path / "header.json" if path.is_dir() else path
        store = _RawStore(header)
        roles = {name: name for name in store.header["variables"]}
        time = np.asarray(store.header["axes"]["time"], dtype=np.float64)
    else:
        strict = varmap is not None
        varmap = varmap or VariableMap.nemo()
        store = _NetcdfStore(path, varmap, strict=strict)
        roles = store.present_roles
        time = store.read_time()
        if not roles:
            raise MissingVariable("no mapped data variable found in file")
    lon = store.read_axis("lon")
    lat = store.read_axis("lat")
    depth = store.read_axis("depth")
    for name, vals in (("lon", lon), ("lat", lat), ("depth", depth)):
        if vals.size > 1 and not np.all(np.diff(vals) > 0):
            raise UnsortedAxis(f"axis {name!r} not monotonic after normalization")
    first = store.read(next(iter(roles.values())), 0)
    expected = (lon.size, lat.size, depth.size)
    if first.shape != expected:
        raise DimensionMismatch(f"variable shape {first.shape} != axes {expected}")
    land = ~np.isfinite(first)
    w_absent = "w" not in roles
    return Dataset(store, roles, lon, lat, depth, time, land, w_absent,
                   source=str(path))


def write_raw(dataset: Dataset, out_dir, roles=None, fill_value=DEFAULT_FILL) -> Path:
    """Write the dataset view as a raw bundle; returns the header path.

    Values are stored as little-endian float32 in (time, depth, lat, lon)
    order with invalid nodes set to the fill value, one file per variable.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    roles = list(roles or dataset.variables)
    header = {
        "format": RAW_FORMAT_NAME,
        "version": 1,
        "dims": {
            "time": int(dataset.n_times),
            "depth": len(dataset.grid.depth),
            "lat": len(dataset.grid.lat),
            "lon": len(dataset.grid.lon),
        },
        "axes": {
            "lon": dataset.grid.lon.values.tolist(),
            "lat": dataset.grid.lat.values.tolist(),
            "depth": dataset.grid.depth.values.tolist(),
            "time": dataset.time.tolist(),
        },
        "units": {"lon": "degrees_east", "lat": "degrees_north", "depth": "m"},
        "fill_value": float(fill_value),
        "variables": {role: f"{role}.f32" for role in roles},
    }
    for role in roles:
        chunks = []
        for t in range(dataset.n_times):
            f = dataset.load_scalar(role, t)
            vals = np.where(f.valid, f.values, fill_value)
            chunks.append(vals.transpose(2, 1, 0).astype("<f4"))  # (depth, lat, lon)
        np.stack(chunks).tofile(out_dir / f"{role}.f32")
    header_path = out_dir / "header.json"
    with open(header_path, "w") as f:
        json.dump(header, f, indent=1, sort_keys=True)
    return header_path


def write_raw_fields(out_dir, fields_by_name: dict, time_value: float = 0.0,
                     fill_value: float = DEFAULT_FILL) -> Path:
    """Write in-memory scalar fields as a single-timestep raw bundle.

    All fields must share one grid; each becomes its own variable file.
    The bundle reopens with open_dataset like any other raw dataset.
    """
    if not fields_by_name:
        raise ValueError("no fields to write")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = next(iter(fields_by_name.values())).grid
    header = {
        "format": RAW_FORMAT_NAME,
        "version": 1,
        "dims": {
            "time": 1,
            "depth": len(grid.depth),
            "lat": len(grid.lat),
            "lon": len(grid.lon),
        },
        "axes": {
            "lon": grid.lon.values.tolist(),
            "lat": grid.lat.values.tolist(),
            "depth": grid.depth.values.tolist(),
            "time": [float(time_value)],
        },
        "units": {"lon": "degrees_east", "lat": "degrees_north", "depth": "m"},
        "fill_value": float(fill_value),
        "variables": {name: f"{name}.f32" for name in fields_by_name},
    }
    for name, field in fields_by_name.items():
        if field.grid.shape != grid.shape:
            raise ValueError("fields must share one grid")
        vals = np.where(field.valid, field.values, fill_value)
        vals.transpose(2, 1, 0).astype("<f4")[None].tofile(out_dir / f"{name}.f32")
    header_path = out_dir / "header.json"
    with open(header_path, "w") as f:
        json.dump(header, f, indent=1, sort_keys=True)
    return header_path
