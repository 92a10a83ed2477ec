"""Compiled inner loops: RK4 field-line advection and the sublevel filtration.

Pure array code compiled with numba; the tracer and topology modules own the
user-facing wrappers. Positions are (lon deg, lat deg, depth m down); velocity
samples are m/s with w positive up, so the depth rate carries a minus sign.
"""

import math

import numpy as np
from numba import njit

EARTH_RADIUS_M = 6_371_000.0
DEG = math.pi / 180.0

# advection termination codes
OK = 0
OUT_OF_DOMAIN = 1
MASKED = 2
MAX_STEPS = 3
STAGNATION = 4
TIME_EXHAUSTED = 5


@njit(cache=True)
def _cell(vals, x):
    """Largest i with vals[i] <= x, clamped to n-2. Caller checks bounds."""
    lo = 0
    hi = vals.shape[0] - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if vals[mid] <= x:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def _tri(arr, i, j, k, fx, fy, fz):
    c00 = arr[i, j, k] * (1.0 - fz) + arr[i, j, k + 1] * fz
    c01 = arr[i, j + 1, k] * (1.0 - fz) + arr[i, j + 1, k + 1] * fz
    c10 = arr[i + 1, j, k] * (1.0 - fz) + arr[i + 1, j, k + 1] * fz
    c11 = arr[i + 1, j + 1, k] * (1.0 - fz) + arr[i + 1, j + 1, k + 1] * fz
    c0 = c00 * (1.0 - fy) + c01 * fy
    c1 = c10 * (1.0 - fy) + c11 * fy
    return c0 * (1.0 - fx) + c1 * fx


@njit(cache=True)
def _velocity(lon, lat, dep, valid, uA, vA, wA, uB, vB, wB, alpha, use_w, x, y, z):
    """Interpolated velocity, blended between two time levels by alpha.

    Returns (status, vx, vy, vz). Any invalid node in the 8-corner stencil
    rejects the whole cell.
    """
    if x < lon[0] or x > lon[-1] or y < lat[0] or y > lat[-1] or z < dep[0] or z > dep[-1]:
        return OUT_OF_DOMAIN, 0.0, 0.0, 0.0
    i = _cell(lon, x)
    j = _cell(lat, y)
    k = _cell(dep, z)
    for a in range(2):
        for b in range(2):
            for c in range(2):
                if not valid[i + a, j + b, k + c]:
                    return MASKED, 0.0, 0.0, 0.0
    fx = (x - lon[i]) / (lon[i + 1] - lon[i])
    fy = (y - lat[j]) / (lat[j + 1] - lat[j])
    fz = (z - dep[k]) / (dep[k + 1] - dep[k])
    vx = _tri(uA, i, j, k, fx, fy, fz)
    vy = _tri(vA, i, j, k, fx, fy, fz)
    if alpha > 0.0:
        vx = vx * (1.0 - alpha) + _tri(uB, i, j, k, fx, fy, fz) * alpha
        vy = vy * (1.0 - alpha) + _tri(vB, i, j, k, fx, fy, fz) * alpha
    vz = 0.0
    if use_w:
        vz = _tri(wA, i, j, k, fx, fy, fz)
        if alpha > 0.0:
            vz = vz * (1.0 - alpha) + _tri(wB, i, j, k, fx, fy, fz) * alpha
    return OK, vx, vy, vz


@njit(cache=True)
def _rates(lon, lat, dep, valid, uA, vA, wA, uB, vB, wB, tA, tB, unsteady, use_w,
           min_speed, sign, x, y, z, t):
    """Arc-length parameterized rates d(lon,lat,depth,t)/ds.

    ds is meters along the trajectory; the velocity direction is converted
    to degree rates with the local metric at the sample latitude.
    """
    alpha = 0.0
    if unsteady:
        alpha = (t - tA) / (tB - tA)
        if alpha < 0.0:
            alpha = 0.0
        elif alpha > 1.0:
            alpha = 1.0
    st, vx, vy, vz = _velocity(lon, lat, dep, valid, uA, vA, wA, uB, vB, wB,
                               alpha, use_w, x, y, z)
    if st != OK:
        return st, 0.0, 0.0, 0.0, 0.0, 0.0
    spd = math.sqrt(vx * vx + vy * vy + vz * vz)
    if spd < min_speed:
        return STAGNATION, 0.0, 0.0, 0.0, 0.0, spd
    dy_m = EARTH_RADIUS_M * DEG
    dx_m = dy_m * math.cos(y * DEG)
    rx = sign * vx / (spd * dx_m)
    ry = sign * vy / (spd * dy_m)
    rz = -sign * vz / spd  # w positive up, depth positive down
    rt = sign / spd
    return OK, rx, ry, rz, rt, spd


@njit(cache=True)
def advect(lon, lat, dep, valid, uA, vA, wA, uB, vB, wB, tA, tB, unsteady,
           use_w, x0, y0, z0, t0, step_m, max_steps, min_speed, sign,
           verts, times, speeds):
    """Classical RK4 advection with per-step degree/meter conversion.

    Fills verts/times/speeds (preallocated with max_steps+1 rows) and
    returns (nverts, reason). The seed is always the first vertex; every
    vertex except possibly the last lies inside the valid domain.
    """
    x, y, z, t = x0, y0, z0, t0
    verts[0, 0] = x
    verts[0, 1] = y
    verts[0, 2] = z
    times[0] = t
    speeds[0] = np.nan
    n = 1
    while True:
        st1, r1x, r1y, r1z, r1t, spd1 = _rates(
            lon, lat, dep, valid, uA, vA, wA, uB, vB, wB, tA, tB, unsteady,
            use_w, min_speed, sign, x, y, z, t)
        if st1 == STAGNATION:
            speeds[n - 1] = spd1
            return n, STAGNATION
        if st1 != OK:
            return n, st1
        speeds[n - 1] = spd1
        if n > max_steps:
            return n, MAX_STEPS
        # one RK4 step; retried once with a shrunk h when it would cross
        # the time-interval end (unsteady case only)
        h = step_m
        clipped = False
        xn = x
        yn = y
        zn = z
        tn = t
        retry = True
        while retry:
            retry = False
            h2 = 0.5 * h
            st2, r2x, r2y, r2z, r2t, _ = _rates(
                lon, lat, dep, valid, uA, vA, wA, uB, vB, wB, tA, tB, unsteady,
                use_w, min_speed, sign, x + h2 * r1x, y + h2 * r1y,
                z + h2 * r1z, t + h2 * r1t)
            if st2 != OK:
                return n, st2
            st3, r3x, r3y, r3z, r3t, _ = _rates(
                lon, lat, dep, valid, uA, vA, wA, uB, vB, wB, tA, tB, unsteady,
                use_w, min_speed, sign, x + h2 * r2x, y + h2 * r2y,
                z + h2 * r2z, t + h2 * r2t)
            if st3 != OK:
                return n, st3
            st4, r4x, r4y, r4z, r4t, _ = _rates(
                lon, lat, dep, valid, uA, vA, wA, uB, vB, wB, tA, tB, unsteady,
                use_w, min_speed, sign, x + h * r3x, y + h * r3y,
                z + h * r3z, t + h * r3t)
            if st4 != OK:
                return n, st4
            h6 = h / 6.0
            xn = x + h6 * (r1x + 2.0 * r2x + 2.0 * r3x + r4x)
            yn = y + h6 * (r1y + 2.0 * r2y + 2.0 * r3y + r4y)
            zn = z + h6 * (r1z + 2.0 * r2z + 2.0 * r3z + r4z)
            tn = t + h6 * (r1t + 2.0 * r2t + 2.0 * r3t + r4t)
            if unsteady and not clipped:
                if sign > 0.0 and tn > tB:
                    h = h * (tB - t) / (tn - t)
                    clipped = True
                    retry = True
                elif sign < 0.0 and tn < tA:
                    h = h * (tA - t) / (tn - t)
                    clipped = True
                    retry = True
        if clipped:
            tn = tB if sign > 0.0 else tA
        x, y, z, t = xn, yn, zn, tn
        verts[n, 0] = x
        verts[n, 1] = y
        verts[n, 2] = z
        times[n] = t
        speeds[n] = np.nan
        n += 1
        if clipped:
            break
    # the exact-landing vertex still needs its speed
    alpha = 0.0
    if unsteady:
        alpha = (t - tA) / (tB - tA)
        if alpha < 0.0:
            alpha = 0.0
        elif alpha > 1.0:
            alpha = 1.0
    st, vx, vy, vz = _velocity(lon, lat, dep, valid, uA, vA, wA, uB, vB, wB,
                               alpha, use_w, x, y, z)
    if st == OK:
        speeds[n - 1] = math.sqrt(vx * vx + vy * vy + vz * vz)
    return n, TIME_EXHAUSTED


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def sublevel_filtration(order, values, ni, nj):
    """Union-find sweep over valid nodes sorted by (value, flat index).

    order holds the flat indices of the valid nodes in that total order;
    values is the full flat slice. Components grow over the 8-neighborhood;
    when two components meet at node s, the one born at the higher minimum
    dies with persistence value[s] - value[its minimum]. Returns a flag
    array marking minima and a persistence array (inf for each surviving
    regional minimum, NaN for non-minima).
    """
    n = ni * nj
    parent = np.full(n, -1, np.int64)
    comp_min = np.full(n, -1, np.int64)
    rank_of = np.full(n, -1, np.int64)
    for pos in range(order.shape[0]):
        rank_of[order[pos]] = pos
    is_min = np.zeros(n, np.bool_)
    pers = np.full(n, np.nan)
    for pos in range(order.shape[0]):
        s = order[pos]
        parent[s] = s
        comp_min[s] = s
        si = s // nj
        sj = s % nj
        had_neighbor = False
        for di in range(-1, 2):
            ii = si + di
            if ii < 0 or ii >= ni:
                continue
            for dj in range(-1, 2):
                if di == 0 and dj == 0:
                    continue
                jj = sj + dj
                if jj < 0 or jj >= nj:
                    continue
                q = ii * nj + jj
                if parent[q] == -1:  # invalid or not yet in the sublevel set
                    continue
                had_neighbor = True
                rs = _find(parent, s)
                rq = _find(parent, q)
                if rs == rq:
                    continue
                ms = comp_min[rs]
                mq = comp_min[rq]
                if rank_of[ms] < rank_of[mq]:
                    pers[mq] = values[s] - values[mq]
                    parent[rq] = rs
                else:
                    pers[ms] = values[s] - values[ms]
                    parent[rs] = rq
        if not had_neighbor:
            is_min[s] = True
    for pos in range(order.shape[0]):
        s = order[pos]
        if is_min[s] and math.isnan(pers[s]):
            pers[s] = np.inf
    return is_min, pers
