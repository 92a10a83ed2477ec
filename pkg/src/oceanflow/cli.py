"""Command-line entry points for the analysis pipelines.

Subcommands: info, derive, trace, eddies, fronts, profile. A TOML config
file supplies the variable-name map ([variables] table) and fallback
defaults ([defaults]: rng_seed, jobs); flags override the config. Exit
codes: 0 success, 1 usage error, 2 data error, 3 empty result.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import fields, fronts, profile, tracer, vtkio
from .eddy import (EddyDetectionParams, detect_eddies_3d, eddies_csv_rows,
                   eddies_to_json_dict)
from .errors import (AllZeroWeights, EmptySelection, EmptySubset,
                     OceanflowError)
from .ingest import ROLES, VariableMap, open_dataset, write_raw_fields
from .tracer import FieldLine, IntegrationParams, Seed

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_EMPTY = 3

_EMPTY_ERRORS = (EmptySelection, EmptySubset, AllZeroWeights)


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit 1 (2 means data error here)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.exit_code_usage(message))

    def exit_code_usage(self, message):
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return EXIT_USAGE


def _parse_range(text: str) -> tuple[float, float]:
    lo, _, hi = text.partition(":")
    try:
        return float(lo), float(hi)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad range {text!r}, expected LO:HI") from exc


def _load_config(path):
    if path is None:
        return None, {}
    with open(path, "rb") as f:
        cfg = tomllib.load(f)
    varmap = VariableMap.from_table(cfg["variables"]) if "variables" in cfg else None
    return varmap, cfg.get("defaults", {})


def _open(args):
    varmap, defaults = _load_config(args.config)
    ds = open_dataset(args.input, varmap)
    if getattr(args, "rng_seed", None) is None and "rng_seed" in defaults:
        args.rng_seed = int(defaults["rng_seed"])
    if getattr(args, "jobs", None) is None and "jobs" in defaults:
        args.jobs = int(defaults["jobs"])
    return ds


def _finish_defaults(args):
    if getattr(args, "rng_seed", None) is None:
        args.rng_seed = 0
    if getattr(args, "jobs", None) is None:
        args.jobs = 1


def _dump_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def _write_csv_rows(path, rows):
    import csv

    with open(path, "w", newline="") as f:
        csv.writer(f).writerows(rows)


def cmd_info(args) -> int:
    ds = _open(args)
    grid = ds.grid
    print(f"source: {ds.source}")
    for axis in (grid.lon, grid.lat, grid.depth):
        lo, hi = axis.bounds
        print(f"{axis.name}: {len(axis)} nodes in [{lo:g}, {hi:g}] {axis.units}")
    print(f"time: {ds.n_times} steps in [{ds.time[0]:g}, {ds.time[-1]:g}]")
    print(f"variables: {', '.join(ds.variables)}"
          + (" (w absent, treated as 0)" if ds.w_absent else ""))
    land = float(grid.land_mask.mean())
    print(f"land fraction: {land:.3f}")
    return EXIT_OK


def cmd_derive(args) -> int:
    ds = _open(args)
    vf = ds.load_vector(args.t)
    derived = fields.derive(vf, args.kind)
    out = Path(args.output)
    if args.format == "raw" or (args.format == "auto" and out.suffix != ".vtk"):
        write_raw_fields(out, {args.kind: derived}, time_value=float(ds.time[args.t]))
    else:
        vtkio.write_rectilinear(out, {args.kind: derived},
                                title=f"{args.kind} at t={args.t}")
    return EXIT_OK


def _make_seeds(args, ds, t):
    if args.seed_mode == "uniform":
        return tracer.seed_uniform(ds.grid, args.n_seeds, args.rng_seed)
    if args.seed_mode == "weighted":
        kind = args.weight_kind
        if kind in fields.DERIVED_FIELD_KINDS:
            weight = fields.derive(ds.load_vector(t), kind)
        elif kind in ds.variables:
            weight = ds.load_scalar(kind, t)
        else:
            raise OceanflowError(
                f"weight kind {kind!r} is neither a derived field nor a variable")
        return tracer.seed_weighted(weight, args.n_seeds, args.rng_seed,
                                    transform=args.weight_transform)
    selections = []
    for spec in args.select or []:
        role, lo, hi = spec.split(":")
        selections.append((ds.load_scalar(role, t), (float(lo), float(hi))))
    if not selections:
        raise OceanflowError("isovolume seeding needs at least one --select ROLE:LO:HI")
    return tracer.seed_in_isovolume(selections, args.n_seeds, args.rng_seed)


def cmd_trace(args) -> int:
    ds = _open(args)
    params = IntegrationParams(
        step_length=args.step_length,
        max_steps=args.max_steps,
        min_speed=args.min_speed,
        include_vertical=args.include_vertical,
        direction=args.direction,
    )
    t = args.t
    seeds = _make_seeds(args, ds, t)
    lines = []
    if args.mode == "streamline":
        vf = ds.load_vector(t)
        sample = None
        if args.sample:
            sample = {role: ds.load_scalar(role, t) for role in args.sample.split(",")}
        for seed in seeds:
            lines.append(tracer.integrate_streamline(vf, seed, params, sample=sample))
    else:
        birth = float(ds.time[t])
        for seed in seeds:
            lines.append(tracer.integrate_pathline(
                ds, Seed(seed.position, birth), params))
    vtkio.write_polylines(args.output, lines, title=f"{args.mode}s")
    return EXIT_OK if lines else EXIT_EMPTY


def cmd_eddies(args) -> int:
    ds = _open(args)
    vf = ds.load_vector(args.t)
    params = EddyDetectionParams(
        persistence_threshold=args.persistence_threshold,
        r_max=args.r_max,
        step_length=args.step_length,
        max_steps=args.max_steps,
    )
    profiles = detect_eddies_3d(vf, params, jobs=args.jobs)
    time_value = float(ds.time[args.t])
    _dump_json(args.output, eddies_to_json_dict(profiles, time_value))
    if args.csv:
        _write_csv_rows(args.csv, eddies_csv_rows(profiles, time_value))
    if args.vtk:
        lines = [pl.line for p in profiles for pl in p.profile_lines]
        vtkio.write_polylines(args.vtk, lines, title="eddy profiles")
    print(f"{len(profiles)} eddies")
    return EXIT_OK if profiles else EXIT_EMPTY


def cmd_fronts(args) -> int:
    ds = _open(args)
    graph = fronts.build_track_graph(
        ds, args.variable, args.range, time_range=args.time_range,
        jaccard_min=args.jaccard_min, jobs=args.jobs)
    tracks = fronts.extract_tracks(graph, args.min_track_length)
    _dump_json(args.output, graph.to_json_dict())
    if args.tracks_csv:
        _write_csv_rows(args.tracks_csv, fronts.tracks_to_csv_rows(graph, tracks))
    if args.tracks_vtk:
        lines = []
        for track in tracks:
            pts = fronts.track_centroids(graph, track)
            times = np.array([float(fid[0]) for fid in track.front_ids])
            sizes = np.array([float(graph.fronts[fid].size) for fid in track.front_ids])
            lines.append(FieldLine(pts, times, np.full(len(pts), np.nan),
                                   "track", {"size": sizes}))
        vtkio.write_polylines(args.tracks_vtk, lines, title="front tracks")
    print(f"{len(graph.fronts)} fronts, {len(tracks)} tracks")
    return EXIT_OK if tracks else EXIT_EMPTY


def cmd_profile(args) -> int:
    ds = _open(args)
    roles = args.variables.split(",") if args.variables else None
    prof = profile.depth_profile(ds, args.lon, args.lat, args.t, roles,
                                 nearest_column=args.nearest_column)
    prof.write_csv(args.output)
    any_valid = any(v.any() for v in prof.valid.values())
    return EXIT_OK if any_valid else EXIT_EMPTY


def _build_parser() -> _Parser:
    parser = _Parser(prog="oceanflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("input", help="NetCDF file or raw bundle (header.json / directory)")
        p.add_argument("--config", help="TOML config with [variables] and [defaults]")

    p = sub.add_parser("info", help="print dataset summary")
    common(p)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("derive", help="compute a derived field and export it")
    common(p)
    p.add_argument("--kind", required=True, choices=fields.DERIVED_FIELD_KINDS)
    p.add_argument("-t", type=int, default=0, help="timestep index")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=("auto", "vtk", "raw"), default="auto")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("trace", help="integrate stream/pathlines from seeds")
    common(p)
    p.add_argument("--mode", choices=("streamline", "pathline"), default="streamline")
    p.add_argument("-t", type=int, default=0,
                   help="timestep (field for streamlines, birth time for pathlines)")
    p.add_argument("--seed-mode", choices=("uniform", "weighted", "isovolume"),
                   default="uniform")
    p.add_argument("--n-seeds", type=int, default=100)
    p.add_argument("--weight-kind", default="speed_horizontal",
                   help="derived field kind or variable role for weighted seeding")
    p.add_argument("--weight-transform", choices=tracer.WEIGHT_TRANSFORMS,
                   default="absolute")
    p.add_argument("--select", action="append", metavar="ROLE:LO:HI",
                   help="scalar range for isovolume seeding (repeatable)")
    p.add_argument("--step-length", type=float, default=5000.0, help="meters")
    p.add_argument("--max-steps", type=int, default=1000)
    p.add_argument("--min-speed", type=float, default=1e-6)
    p.add_argument("--include-vertical", action="store_true")
    p.add_argument("--direction", choices=("forward", "backward", "both"),
                   default="forward")
    p.add_argument("--sample", help="comma-separated roles sampled along streamlines")
    p.add_argument("--rng-seed", type=int, default=None)
    p.add_argument("-o", "--output", required=True, help="VTK polydata path")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("eddies", help="detect eddies at one timestep")
    common(p)
    p.add_argument("-t", type=int, default=0)
    p.add_argument("--persistence-threshold", type=float, required=True,
                   help="speed persistence threshold, m/s")
    p.add_argument("--r-max", type=float, default=250_000.0)
    p.add_argument("--step-length", type=float, default=None)
    p.add_argument("--max-steps", type=int, default=4096)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("-o", "--output", required=True, help="JSON path")
    p.add_argument("--csv", help="per-slice CSV summary path")
    p.add_argument("--vtk", help="profile streamlines polydata path")
    p.set_defaults(func=cmd_eddies)

    p = sub.add_parser("fronts", help="track isovolume surface fronts over time")
    common(p)
    p.add_argument("--variable", required=True, choices=ROLES)
    p.add_argument("--range", required=True, type=_parse_range, metavar="LO:HI")
    p.add_argument("--time-range", type=_parse_range, metavar="T0:T1", default=None)
    p.add_argument("--min-track-length", type=int, default=2)
    p.add_argument("--jaccard-min", type=float, default=0.0)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("-o", "--output", required=True, help="track graph JSON path")
    p.add_argument("--tracks-csv")
    p.add_argument("--tracks-vtk")
    p.set_defaults(func=cmd_fronts)

    p = sub.add_parser("profile", help="sample a vertical needle")
    common(p)
    p.add_argument("--lon", type=float, required=True)
    p.add_argument("--lat", type=float, required=True)
    p.add_argument("-t", type=int, default=0)
    p.add_argument("--variables", help="comma-separated roles (default: all)")
    p.add_argument("--nearest-column", action="store_true")
    p.add_argument("-o", "--output", required=True, help="CSV path")
    p.set_defaults(func=cmd_profile)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    _finish_defaults(args)
    try:
        return args.func(args)
    except _EMPTY_ERRORS as exc:
        print(f"oceanflow: empty result: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (OceanflowError, OSError, ValueError) as exc:
        print(f"oceanflow: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
