"""Command-line entry point: render, sweep, dump-table, scene-info.

Defaults mirror the headline study configuration: hash precision 6,
go-up level 0, 8 samples per pixel, limit mode.  Bundled scenes default
to 256x256; the paper-scale 1024x1024 is one ``--resolution`` flag away.

Exit codes: 0 success (and all --verify checks passed), 2 missing input
file, 1 any other error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bvh as bvh_mod
from . import metrics, scene_io, tracer
from .errors import HrppError
from .geom import RayKind
from .predictor import PredictorTable
from .rayhash import HashConfig

SWEEP_AXES = ("precision", "go_up_level", "spp")


def _resolve_scene(arg: str) -> Path:
    p = Path(arg)
    if p.is_file():
        return p
    if p.suffix == "" and "/" not in arg:
        try:
            return scene_io.bundled_scene_path(arg)
        except FileNotFoundError:
            pass
    raise FileNotFoundError(
        f"scene {arg!r} not found (no such file, and not one of the bundled "
        f"scenes: {scene_io.bundled_scene_names()})")


def _apply_resolution(scene, resolution):
    if resolution is None:
        return scene
    w, h = resolution
    cam = dataclasses.replace(scene.camera, resolution=(w, h))
    return dataclasses.replace(scene, camera=cam)


def _parse_resolution(text: str):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"resolution must look like 512x512, got {text!r}")


def _make_tables(precision: int, go_up: int):
    cfg = HashConfig(precision_bits=precision)
    return {
        "closest": PredictorTable(cfg, go_up_level=go_up, kind=RayKind.CLOSEST_HIT),
        "hit_any": PredictorTable(cfg, go_up_level=go_up, kind=RayKind.HIT_ANY),
    }


def _render_once(scene, tree, args, mode, spp=None, precision=None, go_up=None,
                 capture_shadow=False):
    spp = args.spp if spp is None else spp
    precision = args.precision if precision is None else precision
    go_up = args.go_up if go_up is None else go_up
    cfg = tracer.RenderConfig(
        spp=spp, max_reflection_depth=args.max_reflection_depth, mode=mode,
        rng_seed=args.seed, jitter=not args.no_jitter, threads=args.threads,
        capture_shadow_queries=capture_shadow)
    tables = None
    if mode is not tracer.RenderMode.BASELINE:
        tables = _make_tables(precision, go_up)
    return tracer.render(scene, tree, tables, cfg)


def _stats_payload(scene_name, args, mode, out):
    rows = _rows_for_output(scene_name, args.precision, args.go_up, args.spp,
                            args.seed, out)
    return {
        "scene": scene_name,
        "mode": mode.value,
        "precision": args.precision,
        "go_up_level": args.go_up,
        "spp": args.spp,
        "seed": args.seed,
        "rows": rows,
    }


def _rows_for_output(scene_name, precision, go_up, spp, seed, out, status="ok"):
    w = out.image.shape[1]
    h = out.image.shape[0]
    res = f"{w}x{h}"
    rows = []
    for kind in tracer.RAY_KIND_LABELS:
        tstats = out.table_stats["hit_any" if kind == "shadow" else "closest"]
        rows.append(metrics.report_row(
            scene_name, out.mode.value, kind, precision, go_up, spp, res,
            seed, out.stats[kind], tstats, status=status))
    return rows


def cmd_render(args) -> int:
    scene_path = _resolve_scene(args.scene)
    scene = _apply_resolution(scene_io.load_scene(scene_path), args.resolution)
    tree = bvh_mod.build_bvh_from_arrays(scene.v0, scene.v1, scene.v2,
                                         max_leaf_size=args.max_leaf_size)
    mode = tracer.RenderMode(args.mode)
    t0 = time.perf_counter()
    out = _render_once(scene, tree, args, mode,
                       capture_shadow=(args.verify and mode is tracer.RenderMode.LIVE))
    elapsed = time.perf_counter() - t0

    image_path = args.out_image or f"{scene.name}_{mode.value}.ppm"
    tracer.write_ppm(image_path, out.image)
    stats_path = args.out_stats or f"{scene.name}_{mode.value}_stats.json"
    with open(stats_path, "w", encoding="utf-8") as f:
        json.dump(_stats_payload(scene.name, args, mode, out), f, indent=2,
                  sort_keys=True)
        f.write("\n")
    print(f"rendered {scene.name} [{mode.value}] "
          f"{scene.camera.resolution[0]}x{scene.camera.resolution[1]} "
          f"spp {args.spp} in {elapsed:.2f}s -> {image_path}, {stats_path}")
    for kind in tracer.RAY_KIND_LABELS:
        s = out.stats[kind]
        if s.rays == 0:
            continue
        sv = (metrics.savings_percent(s) if s.baseline_box_tests > 0 else 0.0)
        print(f"  {kind}: rays {s.rays}  tp {s.tp}  fp {s.fp}  neg {s.neg}  "
              f"savings {sv:.2f}%")

    if args.verify:
        if mode is tracer.RenderMode.LIMIT:
            ref = _render_once(scene, tree, args, tracer.RenderMode.BASELINE)
            same = (tracer.image_to_ppm_bytes(out.image)
                    == tracer.image_to_ppm_bytes(ref.image))
            print(f"  verify: limit image {'==' if same else '!='} baseline image")
            if not same:
                return 1
        elif mode is tracer.RenderMode.LIVE:
            logq = out.shadow_log
            if logq is not None:
                ref = bvh_mod.intersect_any_batch(
                    tree, logq.origins, logq.directions,
                    np.zeros(len(logq.t_max)), logq.t_max)
                same = bool(np.array_equal(ref["found"], logq.occluded))
                print(f"  verify: live occlusion mask "
                      f"{'==' if same else '!='} baseline occlusion mask")
                if not same:
                    return 1
    return 0


def run_sweep(scene, tree, axis: str, values, base_args) -> list[dict]:
    """One limit render per value over a shared scene and BVH; fresh tables
    per run.  Failed runs produce a row with a failure status."""
    rows = []
    for value in values:
        precision = base_args.precision
        go_up = base_args.go_up
        spp = base_args.spp
        if axis == "precision":
            precision = value
        elif axis == "go_up_level":
            go_up = value
        elif axis == "spp":
            spp = value
        else:
            raise ValueError(f"unknown sweep axis {axis!r}")
        res = f"{scene.camera.resolution[0]}x{scene.camera.resolution[1]}"
        try:
            out = _render_once(scene, tree, base_args,
                               tracer.RenderMode(base_args.mode),
                               spp=spp, precision=precision, go_up=go_up)
            rows.extend(_rows_for_output(scene.name, precision, go_up, spp,
                                         base_args.seed, out))
        except HrppError as e:
            for kind in tracer.RAY_KIND_LABELS:
                rows.append(metrics.failed_row(
                    scene.name, base_args.mode, kind, precision, go_up, spp,
                    res, base_args.seed, str(e)))
    return rows


def cmd_sweep(args) -> int:
    scene_path = _resolve_scene(args.scene)
    scene = _apply_resolution(scene_io.load_scene(scene_path), args.resolution)
    tree = bvh_mod.build_bvh_from_arrays(scene.v0, scene.v1, scene.v2,
                                         max_leaf_size=args.max_leaf_size)
    values = [int(v) for v in args.values.split(",") if v != ""]
    if not values:
        raise HrppError("sweep needs at least one value")
    rows = run_sweep(scene, tree, args.axis, values, args)
    metrics.write_csv(rows, args.csv, timestamp=not args.no_timestamp)
    print(f"wrote {len(rows)} rows to {args.csv}")
    if args.json:
        metrics.write_json(rows, args.json)
        print(f"wrote JSON mirror to {args.json}")
    failed = [r for r in rows if r["status"] != "ok"]
    if failed:
        print(f"{len(failed)} row(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_dump_table(args) -> int:
    scene_path = _resolve_scene(args.scene)
    scene = _apply_resolution(scene_io.load_scene(scene_path), args.resolution)
    tree = bvh_mod.build_bvh_from_arrays(scene.v0, scene.v1, scene.v2,
                                         max_leaf_size=args.max_leaf_size)
    tables = _make_tables(args.precision, args.go_up)
    cfg = tracer.RenderConfig(
        spp=args.spp, max_reflection_depth=args.max_reflection_depth,
        mode=tracer.RenderMode.LIMIT, rng_seed=args.seed,
        jitter=not args.no_jitter, threads=args.threads)
    tracer.render(scene, tree, tables, cfg)
    table = tables["closest" if args.kind == "closest" else "hit_any"]
    lines = table.dump_lines()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            for line in lines:
                f.write(line + "\n")
        print(f"wrote {table.entry_count} entries to {args.out}")
    else:
        for line in lines:
            print(line)
    return 0


def cmd_scene_info(args) -> int:
    scene_path = _resolve_scene(args.scene)
    scene = scene_io.load_scene(scene_path)
    tree = bvh_mod.build_bvh_from_arrays(scene.v0, scene.v1, scene.v2,
                                         max_leaf_size=args.max_leaf_size)
    leaves = tree.leaf_indices()
    print(f"scene: {scene.name}")
    print(f"triangles: {scene.triangle_count}")
    print(f"max BVH depth: {tree.max_depth}")
    print(f"bvh nodes: {tree.node_count} ({len(leaves)} leaves)")
    print(f"mean leaf size: {tree.count[leaves].mean():.2f}")
    print(f"lights: {len(scene.lights)}")
    print(f"resolution: {scene.camera.resolution[0]}x{scene.camera.resolution[1]}")
    return 0


def _add_common_config(p: argparse.ArgumentParser, mode_default="limit"):
    p.add_argument("scene", help="scene JSON path or bundled scene name")
    p.add_argument("--mode", choices=[m.value for m in tracer.RenderMode],
                   default=mode_default)
    p.add_argument("--precision", type=int, default=6,
                   help="hash precision bits (1..7)")
    p.add_argument("--go-up", dest="go_up", type=int, default=0,
                   help="predict this many levels above the hit leaf")
    p.add_argument("--spp", type=int, default=8, help="samples per pixel")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=_parse_resolution, default=None,
                   help="override the scene camera resolution, e.g. 1024x1024")
    p.add_argument("--no-jitter", action="store_true",
                   help="aim every sample at the pixel centre")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--max-leaf-size", type=int, default=4)
    p.add_argument("--max-reflection-depth", type=int, default=2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hrpp",
        description="Hash-based ray path prediction limit-study workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render one configuration")
    _add_common_config(p)
    p.add_argument("--out-image", default=None, help="output PPM path")
    p.add_argument("--out-stats", default=None, help="output stats JSON path")
    p.add_argument("--verify", action="store_true",
                   help="limit: assert image equality with baseline; "
                        "live: assert occlusion mask fidelity")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("sweep", help="sweep one parameter axis")
    _add_common_config(p)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True,
                   help="comma-separated values, e.g. 1,2,4,8")
    p.add_argument("--csv", required=True, help="output CSV path")
    p.add_argument("--json", default=None, help="optional JSON mirror path")
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit the timestamp header for byte-stable output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dump-table", help="render then dump a predictor table")
    _add_common_config(p)
    p.add_argument("--kind", choices=["closest", "hit_any"], default="closest")
    p.add_argument("--out", default=None, help="write to file instead of stdout")
    p.set_defaults(func=cmd_dump_table)

    p = sub.add_parser("scene-info", help="print triangle count and BVH facts")
    p.add_argument("scene")
    p.add_argument("--max-leaf-size", type=int, default=4)
    p.set_defaults(func=cmd_scene_info)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except HrppError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
