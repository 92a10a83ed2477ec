"""Isovolume surface fronts and their temporal track graph.

A front is one 26-connected component of the isovolume's boundary, where
boundary nodes are member nodes with at least one non-member among their 6
face neighbors (the domain border counts as non-member). Fronts of
consecutive timesteps link when their node sets overlap; the resulting
graph summarizes how the enclosed water masses move, and greedy
max-overlap walks through it extract individual tracks.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import Position, ScalarField

_STRUCT26 = np.ones((3, 3, 3), dtype=bool)
_STRUCT6 = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True)
class IsoVolume:
    """Nodes whose value lies within a closed range (and are valid)."""

    grid: object
    member: np.ndarray


@dataclass(frozen=True)
class SurfaceFront:
    """One boundary component: (timestep, index) id, node set, centroid."""

    id: tuple[int, int]
    nodes: np.ndarray  # sorted flat node indices
    centroid: Position
    size: int


@dataclass
class TrackGraph:
    """All fronts over a time range plus weighted links between steps."""

    fronts: dict  # id -> SurfaceFront
    edges: list  # (id_a, id_b, weight), consecutive timesteps only
    timesteps: list

    def outgoing(self, front_id):
        return [(b, w) for a, b, w in self.edges if a == front_id]

    def to_json_dict(self) -> dict:
        nodes = []
        for fid in sorted(self.fronts):
            f = self.fronts[fid]
            nodes.append({
                "t": fid[0],
                "index": fid[1],
                "size": int(f.size),
                "centroid": {
                    "lon": f.centroid.lon,
                    "lat": f.centroid.lat,
                    "depth": f.centroid.depth,
                },
            })
        edges = [{"from": list(a), "to": list(b), "weight": int(w)}
                 for a, b, w in self.edges]
        return {"timesteps": list(self.timesteps), "fronts": nodes, "edges": edges}


@dataclass(frozen=True)
class Track:
    """A path through the track graph, one front per consecutive timestep."""

    front_ids: tuple

    def __len__(self):
        return len(self.front_ids)


def extract_isovolume(f: ScalarField, lo: float, hi: float) -> IsoVolume:
    """Member mask: valid nodes with lo <= value <= hi."""
    with np.errstate(invalid="ignore"):
        member = f.valid & (f.values >= lo) & (f.values <= hi)
    return IsoVolume(f.grid, member)


def _boundary_nodes(member: np.ndarray) -> np.ndarray:
    """Members with a non-member 6-neighbor; the domain border is non-member."""
    interior = ndimage.binary_erosion(member, structure=_STRUCT6, border_value=0)
    return member & ~interior


def surface_fronts(volume: IsoVolume, t: int) -> list[SurfaceFront]:
    """26-connected components of the isovolume boundary at timestep t.

    Component indices are deterministic: sorted by the minimum flat node
    index of each component.
    """
    boundary = _boundary_nodes(volume.member)
    labels, n = ndimage.label(boundary, structure=_STRUCT26)
    if n == 0:
        return []
    flat = labels.ravel()
    idx = np.nonzero(flat)[0]
    labs = flat[idx]
    by_label = np.argsort(labs, kind="stable")
    counts = np.bincount(labs, minlength=n + 1)[1:]
    groups = np.split(idx[by_label], np.cumsum(counts)[:-1])
    order = sorted(range(n), key=lambda g: groups[g][0])
    grid = volume.grid
    shape = volume.member.shape
    fronts = []
    for ci, g in enumerate(order):
        nodes = groups[g]
        ii, jj, kk = np.unravel_index(nodes, shape)
        centroid = Position(
            float(grid.lon.values[ii].mean()),
            float(grid.lat.values[jj].mean()),
            float(grid.depth.values[kk].mean()),
        )
        fronts.append(SurfaceFront((t, ci), nodes, centroid, int(nodes.size)))
    return fronts


def link_fronts(a: list[SurfaceFront], b: list[SurfaceFront],
                jaccard_min: float = 0.0) -> list[tuple]:
    """Edges (id_a, id_b, overlap) for fronts sharing node indices.

    Weight is the overlap count; jaccard_min optionally drops weak links
    relative to the union size.
    """
    if not a or not b:
        return []
    nvox = int(max(max(f.nodes[-1] for f in a), max(f.nodes[-1] for f in b))) + 1
    la = np.zeros(nvox, dtype=np.int32)
    lb = np.zeros(nvox, dtype=np.int32)
    for pos, f in enumerate(a):
        la[f.nodes] = pos + 1
    for pos, f in enumerate(b):
        lb[f.nodes] = pos + 1
    both = (la > 0) & (lb > 0)
    if not both.any():
        return []
    pairs = la[both].astype(np.int64) * (len(b) + 1) + lb[both]
    uniq, counts = np.unique(pairs, return_counts=True)
    edges = []
    for code, w in zip(uniq, counts):
        ia = int(code // (len(b) + 1)) - 1
        ib = int(code % (len(b) + 1)) - 1
        if jaccard_min > 0:
            union = a[ia].size + b[ib].size - int(w)
            if w / union < jaccard_min:
                continue
        edges.append((a[ia].id, b[ib].id, int(w)))
    edges.sort()
    return edges


def _fronts_job(args):
    values, valid, grid, lo, hi, t = args
    f = ScalarField(grid, "front-input", values, valid)
    return surface_fronts(extract_isovolume(f, lo, hi), t)


def build_track_graph(dataset, role: str, value_range, time_range=None,
                      jaccard_min: float = 0.0, jobs: int = 1) -> TrackGraph:
    """Fronts of every timestep in range plus all consecutive links."""
    lo, hi = value_range
    if time_range is None:
        steps = list(range(dataset.n_times))
    else:
        t0, t1 = time_range
        steps = [t for t in range(dataset.n_times)
                 if t0 <= dataset.time[t] <= t1]
    per_step = []
    if jobs > 1:
        payload = []
        for t in steps:
            f = dataset.load_scalar(role, t)
            payload.append((f.values, f.valid, f.grid, lo, hi, t))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_step = list(pool.map(_fronts_job, payload))
    else:
        for t in steps:
            f = dataset.load_scalar(role, t)
            per_step.append(surface_fronts(extract_isovolume(f, lo, hi), t))
    fronts = {f.id: f for step in per_step for f in step}
    edges = []
    for a, b in zip(per_step[:-1], per_step[1:]):
        edges.extend(link_fronts(a, b, jaccard_min=jaccard_min))
    return TrackGraph(fronts, edges, steps)


def extract_tracks(graph: TrackGraph, min_length: int = 1) -> list[Track]:
    """Greedy node-disjoint paths through the graph, longest first.

    Repeatedly start from the earliest unvisited front and follow the
    maximum-weight outgoing edge to an unvisited front (ties prefer the
    larger target, then the smaller index). Tracks shorter than
    min_length are dropped; the rest are ordered by decreasing length.
    """
    outgoing = {}
    for a, b, w in graph.edges:
        outgoing.setdefault(a, []).append((b, w))
    visited = set()
    tracks = []
    for start in sorted(graph.fronts):
        if start in visited:
            continue
        path = [start]
        visited.add(start)
        current = start
        while True:
            best = None
            for target, w in outgoing.get(current, []):
                if target in visited:
                    continue
                key = (w, graph.fronts[target].size, -target[1])
                if best is None or key > best[0]:
                    best = (key, target)
            if best is None:
                break
            current = best[1]
            path.append(current)
            visited.add(current)
        if len(path) >= min_length:
            tracks.append(Track(tuple(path)))
    tracks.sort(key=lambda tr: (-len(tr), tr.front_ids[0]))
    return tracks


def tracks_to_csv_rows(graph: TrackGraph, tracks) -> list[list]:
    """Tidy rows: track id, t, lon, lat, depth, size."""
    rows = [["track", "t", "lon", "lat", "depth", "size"]]
    for ti, track in enumerate(tracks):
        for fid in track.front_ids:
            f = graph.fronts[fid]
            rows.append([ti, fid[0], f.centroid.lon, f.centroid.lat,
                         f.centroid.depth, f.size])
    return rows


def track_centroids(graph: TrackGraph, track: Track) -> np.ndarray:
    """(n, 3) centroid polyline (lon, lat, depth) of one track."""
    return np.array([[graph.fronts[fid].centroid.lon,
                      graph.fronts[fid].centroid.lat,
                      graph.fronts[fid].centroid.depth]
                     for fid in track.front_ids])
