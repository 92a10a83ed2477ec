"""Eddy detection: persistent speed minima, winding verification, boundary search.

The per-slice pipeline follows the detection scheme end to end: horizontal
speed minima filtered by persistence give candidate centres, a streamline
seeded one cell east must visit all four quadrants around the centre, and
the boundary is the furthest seed along each radial axis whose streamline
still spirals back onto itself, found by bisection. Slices are independent
(vertical velocity is never used), so detection parallelizes over depth
levels; per-slice results stack into 3D profiles by centre proximity.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import topology
from .errors import NoClosedStreamline, OutOfDomain
from .grid import Position, VectorField, meters_per_degree
from .tracer import FieldLine, IntegrationParams, Seed, integrate_streamline

logger = logging.getLogger(__name__)

RADIAL_AXES = {"E": (1.0, 0.0), "W": (-1.0, 0.0), "N": (0.0, 1.0), "S": (0.0, -1.0)}


@dataclass(frozen=True)
class EddyCentre:
    """A persistent speed minimum at one depth slice."""

    position: Position
    depth_index: int
    node_index: tuple[int, int]
    persistence: float
    speed: float
    vorticity_sign: int = 0  # sign of local vorticity, metadata only


@dataclass(frozen=True)
class EddyDetectionParams:
    """Thresholds and search bounds for the detection pipeline.

    r_max defaults to 250 km, the upper end of the mesoscale; step_length
    None means a quarter of the local cell size at the centre.
    """

    persistence_threshold: float
    r_max: float = 250_000.0
    bisection_iters: int = 12
    step_length: float | None = None
    max_steps: int = 4096
    min_speed: float = 1e-6
    seed_offset_cells: float = 1.0
    closure_ratio: float = 0.25
    stacking_radius_cells: float = 2.0
    profile_rings: tuple = (0.5, 1.0)

    def __post_init__(self):
        if self.persistence_threshold < 0:
            raise ValueError("persistence_threshold must be >= 0")
        if self.r_max <= 0 or self.bisection_iters < 1:
            raise ValueError("bad boundary search bounds")
        if any(not 0 < r <= 1 for r in self.profile_rings):
            raise ValueError("profile rings must be fractions in (0, 1]")


@dataclass
class ProfileLine:
    """One ring streamline of a profile, classified closed or spiral."""

    line: FieldLine
    depth_index: int
    ring: float
    closed: bool


@dataclass
class EddyProfile:
    """A vertical stack of per-slice detections belonging to one eddy.

    centre and boundary_radii describe the most persistent slice; slices
    holds every (centre, radii) pair of the stack in depth order.
    """

    centre: EddyCentre
    boundary_radii: dict
    slices: list
    profile_lines: list

    @property
    def depth_extent(self) -> tuple[int, int]:
        ks = [c.depth_index for c, _ in self.slices]
        return min(ks), max(ks)


def _slice_arrays(vf: VectorField, k: int):
    speed = np.hypot(vf.u[:, :, k], vf.v[:, :, k])
    valid = vf.valid[:, :, k]
    return np.where(valid, speed, np.nan), valid


def _cell_sizes_m(grid, i, j):
    """Local cell extents in meters around node (i, j)."""
    lon = grid.lon.values
    lat = grid.lat.values
    dlon = lon[i + 1] - lon[i] if i + 1 < lon.size else lon[i] - lon[i - 1]
    dlat = lat[j + 1] - lat[j] if j + 1 < lat.size else lat[j] - lat[j - 1]
    dxm, dym = meters_per_degree(float(lat[j]))
    return dlon * dxm, dlat * dym


def _step_length(vf, centre, params):
    if params.step_length is not None:
        return params.step_length
    ddx, ddy = _cell_sizes_m(vf.grid, *centre.node_index)
    return 0.25 * min(ddx, ddy)


def _offset_position(grid, centre, east_m, north_m):
    """Centre displaced by meters; None when it leaves the grid box."""
    dxm, dym = meters_per_degree(centre.position.lat)
    if dxm <= 0:
        return None
    p = Position(centre.position.lon + east_m / dxm,
                 centre.position.lat + north_m / dym,
                 centre.position.depth)
    return p if grid.contains(p) else None


def _local_xy_m(vertices, centre):
    dxm, dym = meters_per_degree(centre.position.lat)
    x = (vertices[:, 0] - centre.position.lon) * dxm
    y = (vertices[:, 1] - centre.position.lat) * dym
    return x, y


def _integration_params(vf, centre, params, max_steps=None):
    return IntegrationParams(
        step_length=_step_length(vf, centre, params),
        max_steps=int(max_steps or params.max_steps),
        min_speed=params.min_speed,
        include_vertical=False,
        direction="forward",
    )


def _vorticity_sign_at(vf, i, j, k):
    lon = vf.grid.lon.values
    lat = vf.grid.lat.values
    i0, i1 = max(i - 1, 0), min(i + 1, lon.size - 1)
    j0, j1 = max(j - 1, 0), min(j + 1, lat.size - 1)
    if i1 == i0 or j1 == j0:
        return 0
    dxm, dym = meters_per_degree(float(lat[j]))
    if dxm <= 0:
        return 0
    dvdx = (vf.v[i1, j, k] - vf.v[i0, j, k]) / ((lon[i1] - lon[i0]) * dxm)
    dudy = (vf.u[i, j1, k] - vf.u[i, j0, k]) / ((lat[j1] - lat[j0]) * dym)
    omega = dvdx - dudy
    if not math.isfinite(omega) or omega == 0:
        return 0
    return 1 if omega > 0 else -1


def detect_centres(vf: VectorField, depth_index: int,
                   params: EddyDetectionParams) -> list[EddyCentre]:
    """Candidate centres of one depth slice, not yet winding-verified.

    Horizontal speed minima, persistence-paired and simplified at the
    configured threshold (same units as speed, m/s).
    """
    speed, valid = _slice_arrays(vf, depth_index)
    if not valid.any():
        return []
    minima = topology.persistence_of_minima(speed, valid)
    kept = topology.simplify_minima(minima, params.persistence_threshold)
    out = []
    for m in kept:
        i, j = m.index
        out.append(EddyCentre(
            position=vf.grid.node_position(i, j, depth_index),
            depth_index=depth_index,
            node_index=(i, j),
            persistence=m.persistence,
            speed=m.value,
            vorticity_sign=_vorticity_sign_at(vf, i, j, depth_index),
        ))
    return out


def winding_check(vf: VectorField, centre: EddyCentre,
                  params: EddyDetectionParams) -> bool:
    """True when a streamline seeded one cell east circles the centre.

    The streamline must visit all four quadrants of the local frame
    centred at the minimum (quadrant = sign pattern of the offsets).
    """
    ddx, _ = _cell_sizes_m(vf.grid, *centre.node_index)
    seed_p = _offset_position(vf.grid, centre, params.seed_offset_cells * ddx, 0.0)
    if seed_p is None:
        return False
    line = integrate_streamline(vf, Seed(seed_p), _integration_params(vf, centre, params))
    x, y = _local_xy_m(line.vertices, centre)
    quadrants = set(zip(x > 0, y > 0))
    return len(quadrants) == 4


def _nearly_closed(line: FieldLine, centre: EddyCentre, seed_r: float,
                   closure_ratio: float) -> bool:
    """Spiral-or-closed-loop test for a streamline seeded at radius seed_r.

    Requires one full winding (the unwrapped polar angle around the centre
    sweeps 2*pi, visiting the quadrants in cyclic order) and that after
    half a winding the trajectory comes back within closure_ratio * seed_r
    of the seed.
    """
    if len(line) < 4:
        return False
    x, y = _local_xy_m(line.vertices, centre)
    sweep = np.abs(np.unwrap(np.arctan2(y, x)) - math.atan2(y[0], x[0]))
    if sweep.max() < 2 * math.pi:
        return False
    half = int(np.argmax(sweep >= math.pi))
    dist_back = np.hypot(x[half:] - x[0], y[half:] - y[0])
    return bool(dist_back.min() < closure_ratio * seed_r)


def check_probe_monotonicity(probes) -> list[tuple[float, float]]:
    """(open_distance, closed_distance) pairs violating closed-inside order.

    probes is a sequence of (distance, closed) outcomes. A closed probe
    outside an open one breaks the assumption the bisection relies on.
    """
    violations = []
    open_below = None
    for d, closed in sorted(probes):
        if not closed:
            open_below = d if open_below is None else open_below
        elif open_below is not None:
            violations.append((open_below, d))
    return violations


def eddy_boundary(vf: VectorField, centre: EddyCentre,
                  params: EddyDetectionParams) -> dict:
    """Bisection for the furthest nearly-closed seed along E/W/N/S axes.

    Returns meters per axis, resolved to r_max / 2**bisection_iters. The
    probe record is checked for closed-outside-open inconsistencies, which
    are logged as warnings. Raises NoClosedStreamline when an axis has no
    closed probe at all.
    """
    iparams = _integration_params(vf, centre, params)
    radii = {}
    for axis, (ux, uy) in RADIAL_AXES.items():
        probes = []

        def closed_at(d):
            p = _offset_position(vf.grid, centre, ux * d, uy * d)
            if p is None:
                return False
            line = integrate_streamline(vf, Seed(p), iparams)
            return _nearly_closed(line, centre, d, params.closure_ratio)

        saturated = closed_at(params.r_max)
        probes.append((params.r_max, saturated))
        if saturated:
            radius = params.r_max
        else:
            lo, hi = 0.0, params.r_max
            for _ in range(params.bisection_iters):
                mid = 0.5 * (lo + hi)
                closed = closed_at(mid)
                probes.append((mid, closed))
                if closed:
                    lo = mid
                else:
                    hi = mid
            if lo == 0.0:
                raise NoClosedStreamline(
                    f"axis {axis}: no closed streamline down to "
                    f"{params.r_max / 2 ** params.bisection_iters:.0f} m")
            radius = lo
            for frac in (0.25, 0.75):
                probes.append((frac * radius, closed_at(frac * radius)))
        for open_d, closed_d in check_probe_monotonicity(probes):
            logger.warning(
                "non-monotone closure at centre %s axis %s: closed at %.0f m "
                "outside open ring at %.0f m", centre.node_index, axis,
                closed_d, open_d)
        radii[axis] = radius
    return radii


def _verified_slice(vf, k, params):
    """Winding-verified centres with boundary radii for one depth slice."""
    out = []
    for centre in detect_centres(vf, k, params):
        if not winding_check(vf, centre, params):
            continue
        try:
            radii = eddy_boundary(vf, centre, params)
        except NoClosedStreamline as exc:
            logger.info("dropping centre %s at slice %d: %s",
                        centre.node_index, k, exc)
            continue
        out.append((centre, radii))
    return out


def _slice_job(args):
    vf, k, params = args
    return _verified_slice(vf, k, params)


def _stack_slices(per_slice, params):
    """Greedy nearest-centre association between adjacent depth slices."""
    done = []
    open_profiles = []  # dicts with slices, last_k, last_node
    for k, found in enumerate(per_slice):
        candidates = list(found)
        extendable = []
        for prof in open_profiles:
            if prof["last_k"] == k - 1:
                extendable.append(prof)
            else:
                done.append(prof)
        pairs = []
        for pi, prof in enumerate(extendable):
            for ci, (centre, _) in enumerate(candidates):
                d = math.hypot(centre.node_index[0] - prof["last_node"][0],
                               centre.node_index[1] - prof["last_node"][1])
                if d <= params.stacking_radius_cells:
                    pairs.append((d, pi, ci))
        pairs.sort()
        used_p, used_c = set(), set()
        for d, pi, ci in pairs:
            if pi in used_p or ci in used_c:
                continue
            used_p.add(pi)
            used_c.add(ci)
            prof = extendable[pi]
            prof["slices"].append(candidates[ci])
            prof["last_k"] = k
            prof["last_node"] = candidates[ci][0].node_index
        open_profiles = []
        for pi, prof in enumerate(extendable):
            (open_profiles if pi in used_p else done).append(prof)
        for ci, cand in enumerate(candidates):
            if ci not in used_c:
                open_profiles.append({
                    "slices": [cand],
                    "last_k": k,
                    "last_node": cand[0].node_index,
                })
    done.extend(open_profiles)
    return [p["slices"] for p in done]


def _attach_profile_lines(vf, slices, params):
    lines = []
    for centre, radii in slices:
        iparams = _integration_params(vf, centre, params)
        for ring in params.profile_rings:
            d = ring * radii["E"]
            p = _offset_position(vf.grid, centre, d, 0.0)
            if p is None:
                continue
            line = integrate_streamline(vf, Seed(p), iparams)
            closed = _nearly_closed(line, centre, d, params.closure_ratio)
            lines.append(ProfileLine(line, centre.depth_index, ring, closed))
    return lines


def detect_eddies_3d(vf: VectorField, params: EddyDetectionParams,
                     jobs: int = 1) -> list[EddyProfile]:
    """Run per-slice detection on every depth level and stack the results.

    Slices are processed independently (optionally by a process pool);
    centres of adjacent slices within the stacking radius join one
    profile. Each profile carries ring streamlines seeded inside the
    boundary radius for export.
    """
    n_depth = len(vf.grid.depth)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_slice = list(pool.map(_slice_job,
                                      [(vf, k, params) for k in range(n_depth)]))
    else:
        per_slice = [_verified_slice(vf, k, params) for k in range(n_depth)]
    profiles = []
    for slices in _stack_slices(per_slice, params):
        rep, rep_radii = max(slices, key=lambda s: (s[0].persistence, -s[0].depth_index))
        profiles.append(EddyProfile(
            centre=rep,
            boundary_radii=rep_radii,
            slices=slices,
            profile_lines=_attach_profile_lines(vf, slices, params),
        ))
    profiles.sort(key=lambda p: (p.centre.depth_index,) + p.centre.node_index)
    return profiles


def eddies_to_json_dict(profiles, time_value: float = 0.0) -> dict:
    """JSON-serializable summary of detected profiles."""
    records = []
    for p in profiles:
        records.append({
            "time": time_value,
            "centre": {
                "lon": p.centre.position.lon,
                "lat": p.centre.position.lat,
                "depth": p.centre.position.depth,
                "depth_index": p.centre.depth_index,
                "persistence": _json_float(p.centre.persistence),
                "speed": p.centre.speed,
                "vorticity_sign": p.centre.vorticity_sign,
            },
            "boundary_radii_m": {k: p.boundary_radii[k] for k in sorted(p.boundary_radii)},
            "depth_extent": list(p.depth_extent),
            "slices": [{
                "depth_index": c.depth_index,
                "lon": c.position.lon,
                "lat": c.position.lat,
                "depth": c.position.depth,
                "persistence": _json_float(c.persistence),
                "boundary_radii_m": {k: r[k] for k in sorted(r)},
            } for c, r in p.slices],
        })
    return {"eddies": records}


def _json_float(x: float):
    return "inf" if math.isinf(x) else x


def eddies_csv_rows(profiles, time_value: float = 0.0) -> list[list]:
    """Per-slice summary rows: time, depth, lon, lat, persistence, radii."""
    rows = [["time", "depth_index", "depth", "lon", "lat", "persistence",
             "radius_e", "radius_w", "radius_n", "radius_s"]]
    for p in profiles:
        for c, r in p.slices:
            rows.append([time_value, c.depth_index, c.position.depth,
                         c.position.lon, c.position.lat, c.persistence,
                         r["E"], r["W"], r["N"], r["S"]])
    return rows
