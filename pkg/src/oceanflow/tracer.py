"""Streamline and pathline integration plus seed placement strategies.

Integration runs in physical (meter) space with a per-step conversion to
degree rates at the current latitude, parameterized by arc length. The
pathline system is augmented with d(t)/ds = 1/|V| and velocity is blended
linearly in time between consecutive timesteps, so a pathline through a
steady dataset reproduces the streamline exactly. Every field line
integrates independently; many seeds can be traced concurrently over one
immutable field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    AllZeroWeights,
    EmptySelection,
    MaskedRegion,
    OutOfDomain,
    TimestepOutOfRange,
)
from .grid import Position, ScalarField, VectorField, interpolate_scalar

TERMINATION_REASONS = (
    "out_of_domain",
    "masked",
    "max_steps",
    "stagnation",
    "time_exhausted",
)
_REASON_NAMES = {
    _kernels.OUT_OF_DOMAIN: "out_of_domain",
    _kernels.MASKED: "masked",
    _kernels.MAX_STEPS: "max_steps",
    _kernels.STAGNATION: "stagnation",
    _kernels.TIME_EXHAUSTED: "time_exhausted",
}

WEIGHT_TRANSFORMS = ("absolute", "positive-part", "negative-part")

_CANDIDATE_BATCH = 4096  # fixed so sampling is reproducible for a given rng seed


@dataclass(frozen=True)
class Seed:
    """A trace start point; birth_time only matters for pathlines."""

    position: Position
    birth_time: float | None = None


@dataclass(frozen=True)
class IntegrationParams:
    """Step length (m), step budget, and termination thresholds."""

    step_length: float
    max_steps: int
    min_speed: float = 1e-6
    include_vertical: bool = False
    direction: str = "forward"

    def __post_init__(self):
        if self.step_length <= 0:
            raise ValueError("step_length must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.min_speed < 0:
            raise ValueError("min_speed must be >= 0")
        if self.direction not in ("forward", "backward", "both"):
            raise ValueError(f"bad direction {self.direction!r}")


@dataclass
class FieldLine:
    """A traced polyline with per-vertex time, speed, and sampled scalars."""

    vertices: np.ndarray  # (n, 3): lon, lat, depth
    times: np.ndarray
    speeds: np.ndarray
    termination_reason: str
    scalars: dict = field(default_factory=dict)

    def __len__(self):
        return self.vertices.shape[0]

    @property
    def positions(self):
        return [Position(*v) for v in self.vertices]


def _advect_once(vf_a, vf_b, t_a, t_b, unsteady, p, t_start, params, sign,
                 max_steps=None):
    grid = vf_a.grid
    use_w = params.include_vertical and vf_a.has_w and (vf_b is None or vf_b.has_w)
    if vf_b is None:
        vf_b = vf_a
    valid = vf_a.valid if vf_a is vf_b else (vf_a.valid & vf_b.valid)
    w_a = vf_a.w if use_w else vf_a.u
    w_b = vf_b.w if use_w else vf_b.u
    nmax = int(max_steps if max_steps is not None else params.max_steps)
    verts = np.empty((nmax + 1, 3))
    times = np.empty(nmax + 1)
    speeds = np.empty(nmax + 1)
    n, reason = _kernels.advect(
        grid.lon.values, grid.lat.values, grid.depth.values, valid,
        vf_a.u, vf_a.v, w_a, vf_b.u, vf_b.v, w_b,
        float(t_a), float(t_b), unsteady, use_w,
        p.lon, p.lat, p.depth, float(t_start),
        float(params.step_length), nmax, float(params.min_speed), float(sign),
        verts, times, speeds)
    return verts[:n].copy(), times[:n].copy(), speeds[:n].copy(), _REASON_NAMES[reason]


def _merge_directions(back, fwd):
    """Backward half reversed, then the forward half (seed kept once)."""
    bv, bt, bs, _ = back
    fv, ft, fs, freason = fwd
    verts = np.concatenate([bv[::-1], fv[1:]])
    times = np.concatenate([bt[::-1], ft[1:]])
    speeds = np.concatenate([bs[::-1], fs[1:]])
    return verts, times, speeds, freason


def _sample_along(line: FieldLine, sample: dict[str, ScalarField] | None):
    if not sample:
        return
    for name, f in sample.items():
        vals = np.full(len(line), np.nan)
        for idx, v in enumerate(line.vertices):
            try:
                vals[idx] = interpolate_scalar(f, Position(*v))
            except (OutOfDomain, MaskedRegion):
                pass
        line.scalars[name] = vals


def integrate_streamline(vf: VectorField, seed: Seed, params: IntegrationParams,
                         sample: dict[str, ScalarField] | None = None) -> FieldLine:
    """Trace an integral curve of the instantaneous velocity field.

    The per-vertex time attribute is the pseudo-time of unit-speed travel
    (negative on the backward half). Termination is recorded, never raised:
    out_of_domain, masked, max_steps, or stagnation.
    """
    p = seed.position
    if not vf.grid.contains(p):
        raise OutOfDomain(f"seed {p} outside grid bounds")
    if params.direction == "both":
        back = _advect_once(vf, None, 0.0, 1.0, False, p, 0.0, params, -1.0)
        fwd = _advect_once(vf, None, 0.0, 1.0, False, p, 0.0, params, +1.0)
        verts, times, speeds, reason = _merge_directions(back, fwd)
    else:
        sign = -1.0 if params.direction == "backward" else 1.0
        verts, times, speeds, reason = _advect_once(vf, None, 0.0, 1.0, False,
                                                    p, 0.0, params, sign)
    line = FieldLine(verts, times, speeds, reason)
    _sample_along(line, sample)
    return line


def _pathline_half(dataset, p, birth, params, sign, loader):
    T = dataset.time
    n_t = T.size
    parts = None
    t = float(birth)
    remaining = params.max_steps
    if n_t < 2:
        return (np.array([[p.lon, p.lat, p.depth]]), np.array([t]),
                np.array([np.nan]), "time_exhausted")
    if sign > 0:
        m = min(max(int(np.searchsorted(T, t, side="right")) - 1, 0), n_t - 2)
        if t >= T[-1]:
            return (np.array([[p.lon, p.lat, p.depth]]), np.array([t]),
                    np.array([np.nan]), "time_exhausted")
    else:
        m = min(max(int(np.searchsorted(T, t, side="left")) - 1, 0), n_t - 2)
        if t <= T[0]:
            return (np.array([[p.lon, p.lat, p.depth]]), np.array([t]),
                    np.array([np.nan]), "time_exhausted")
    while True:
        vf_a = loader(m)
        vf_b = loader(m + 1)
        seg = _advect_once(vf_a, vf_b, T[m], T[m + 1], True, p, t, params, sign,
                           max_steps=remaining)
        verts, times, speeds, reason = seg
        if parts is None:
            parts = [verts, times, speeds]
        else:
            parts[0] = np.concatenate([parts[0], verts[1:]])
            parts[1] = np.concatenate([parts[1], times[1:]])
            parts[2] = np.concatenate([parts[2], speeds[1:]])
        remaining -= max(len(verts) - 1, 0)
        if reason != "time_exhausted":
            break
        at_edge = (m + 1 >= n_t - 1) if sign > 0 else (m == 0)
        if at_edge:
            break
        if remaining < 1:  # interval ended exactly as the step budget ran out
            reason = "max_steps"
            break
        if sign > 0:
            m += 1
            t = float(T[m])
        else:
            m -= 1
            t = float(T[m + 1])
        p = Position(*parts[0][-1])
    return parts[0], parts[1], parts[2], reason


def integrate_pathline(dataset, seed: Seed, params: IntegrationParams) -> FieldLine:
    """Trace a massless particle through the time-varying velocity field.

    Velocity is interpolated linearly in time between consecutive
    timesteps. The trace additionally terminates with time_exhausted at
    the dataset's time range ends. birth_time defaults to the first time
    value; backward direction runs backward in time.
    """
    p = seed.position
    if not dataset.grid.contains(p):
        raise OutOfDomain(f"seed {p} outside grid bounds")
    birth = seed.birth_time if seed.birth_time is not None else float(dataset.time[0])
    if not (dataset.time[0] <= birth <= dataset.time[-1]):
        raise TimestepOutOfRange(f"birth time {birth} outside dataset time range")
    cache: dict[int, VectorField] = {}

    def loader(m):
        if m not in cache:
            cache[m] = dataset.load_vector(m)
            if len(cache) > 3:
                cache.pop(min(k for k in cache if k != m))
        return cache[m]

    if params.direction == "both":
        back = _pathline_half(dataset, p, birth, params, -1.0, loader)
        fwd = _pathline_half(dataset, p, birth, params, +1.0, loader)
        verts, times, speeds, reason = _merge_directions(back, fwd)
    else:
        sign = -1.0 if params.direction == "backward" else 1.0
        verts, times, speeds, reason = _pathline_half(dataset, p, birth, params, sign)
    return FieldLine(verts, times, speeds, reason)


def _valid_cells(valid3d):
    """Cells whose 8 corners are all valid."""
    v = valid3d
    return (v[:-1, :-1, :-1] & v[1:, :-1, :-1] & v[:-1, 1:, :-1] & v[:-1, :-1, 1:]
            & v[1:, 1:, :-1] & v[1:, :-1, 1:] & v[:-1, 1:, 1:] & v[1:, 1:, 1:])


def _candidate_batch(grid, rng, size):
    lon0, lon1 = grid.lon.bounds
    lat0, lat1 = grid.lat.bounds
    dep0, dep1 = grid.depth.bounds
    pts = rng.random((size, 3))
    pts[:, 0] = lon0 + pts[:, 0] * (lon1 - lon0)
    pts[:, 1] = lat0 + pts[:, 1] * (lat1 - lat0)
    pts[:, 2] = dep0 + pts[:, 2] * (dep1 - dep0)
    return pts


def _cells_of(grid, pts):
    ci = np.clip(np.searchsorted(grid.lon.values, pts[:, 0], side="right") - 1,
                 0, len(grid.lon) - 2)
    cj = np.clip(np.searchsorted(grid.lat.values, pts[:, 1], side="right") - 1,
                 0, len(grid.lat) - 2)
    ck = np.clip(np.searchsorted(grid.depth.values, pts[:, 2], side="right") - 1,
                 0, len(grid.depth) - 2)
    return ci, cj, ck


def _rejection_sample(grid, ok_cells, n, rng, extra_accept=None,
                      max_candidates=10**6):
    seeds = []
    tried = 0
    while len(seeds) < n:
        if tried >= max_candidates:
            raise EmptySelection(
                f"{max_candidates} candidates produced only {len(seeds)}/{n} seeds")
        pts = _candidate_batch(grid, rng, _CANDIDATE_BATCH)
        tried += _CANDIDATE_BATCH
        ci, cj, ck = _cells_of(grid, pts)
        keep = ok_cells[ci, cj, ck]
        for row in pts[keep]:
            p = Position(float(row[0]), float(row[1]), float(row[2]))
            if extra_accept is not None and not extra_accept(p):
                continue
            seeds.append(Seed(p))
            if len(seeds) == n:
                break
    return seeds


def seed_uniform(grid, n: int, rng_seed: int = 0) -> list[Seed]:
    """n seeds uniform over the non-land part of the coordinate box.

    Rejection sampling against cells whose corners are all water, so the
    accepted positions are uniform over the valid volume. Deterministic
    for a fixed rng_seed.
    """
    rng = np.random.default_rng(rng_seed)
    ok_cells = _valid_cells(~grid.land_mask)
    if not ok_cells.any():
        raise EmptySelection("grid has no fully-water cell")
    return _rejection_sample(grid, ok_cells, n, rng)


def _transform_weights(values, transform):
    if transform == "absolute":
        return np.abs(values)
    if transform == "positive-part":
        return np.maximum(values, 0.0)
    if transform == "negative-part":
        return np.maximum(-values, 0.0)
    raise ValueError(f"unknown weight transform {transform!r}; use one of {WEIGHT_TRANSFORMS}")


def seed_weighted(weight: ScalarField, n: int, rng_seed: int = 0,
                  transform: str = "absolute") -> list[Seed]:
    """n seeds with cell probability proportional to the transformed weight.

    Node weights pass through the sign transform (absolute by default;
    negative-part suits vorticity-dominated regions of the strain/rotation
    balance), then each cell takes the minimum over its 8 corners, so a
    cell only draws seeds when the whole cell carries weight. Cells
    touching invalid nodes are excluded. Position is uniform within the
    chosen cell.
    """
    grid = weight.grid
    tw = np.where(weight.valid, _transform_weights(weight.values, transform), -1.0)
    v = tw
    cellw = np.minimum.reduce([
        v[:-1, :-1, :-1], v[1:, :-1, :-1], v[:-1, 1:, :-1], v[:-1, :-1, 1:],
        v[1:, 1:, :-1], v[1:, :-1, 1:], v[:-1, 1:, 1:], v[1:, 1:, 1:]])
    cellw = np.maximum(cellw, 0.0)
    total = cellw.sum()
    if not total > 0:
        raise AllZeroWeights("no cell has positive transformed weight")
    rng = np.random.default_rng(rng_seed)
    flat = cellw.ravel() / total
    chosen = rng.choice(flat.size, size=n, p=flat)
    offs = rng.random((n, 3))
    ci, cj, ck = np.unravel_index(chosen, cellw.shape)
    lon = grid.lon.values
    lat = grid.lat.values
    dep = grid.depth.values
    seeds = []
    for m in range(n):
        i, j, k = ci[m], cj[m], ck[m]
        seeds.append(Seed(Position(
            float(lon[i] + offs[m, 0] * (lon[i + 1] - lon[i])),
            float(lat[j] + offs[m, 1] * (lat[j + 1] - lat[j])),
            float(dep[k] + offs[m, 2] * (dep[k + 1] - dep[k])),
        )))
    return seeds


def seed_in_isovolume(selections, n: int, rng_seed: int = 0,
                      max_candidates: int = 10**6) -> list[Seed]:
    """n seeds restricted to scalar ranges, one (field, (lo, hi)) per entry.

    Uniform candidates are kept iff every field interpolates into its
    range; candidates in masked cells are rejected. Raises EmptySelection
    once the candidate budget is exhausted. With selections spanning each
    field's full range this reproduces seed_uniform exactly (same rng
    consumption).
    """
    selections = [(f, (float(lo), float(hi))) for f, (lo, hi) in selections]
    if not selections:
        raise ValueError("need at least one (field, range) selection")
    grid = selections[0][0].grid
    for f, _ in selections[1:]:
        if f.grid.shape != grid.shape:
            raise ValueError("selection fields must share one grid")
    ok_cells = _valid_cells(~grid.land_mask)
    if not ok_cells.any():
        raise EmptySelection("grid has no fully-water cell")

    def accept(p):
        for f, (lo, hi) in selections:
            try:
                value = interpolate_scalar(f, p)
            except (MaskedRegion, OutOfDomain):
                return False
            if not lo <= value <= hi:
                return False
        return True

    rng = np.random.default_rng(rng_seed)
    return _rejection_sample(grid, ok_cells, n, rng, extra_accept=accept,
                             max_candidates=max_candidates)
