"""Command-line interface.

Verbs: gen-scene, simplify, cluster, depth, cull-anchors, densify-plan,
bench, oracle. Defaults come from PipelineConfig, overridden by --config
(JSON file), overridden again by explicit flags. Exit code 0 on success;
failures print a machine-readable JSON error to stderr. ``--json`` emits
results as JSON on stdout.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time

import numpy as np

from . import io as pio
from .backend import backend_name
from .clusters import build_clusters
from .densify import ProxyGrid, plan_anchors, select_patches
from .oracles import oracle_suite
from .pipeline import run_pipeline
from .raster import prepare_screen_triangles
from .scene import PipelineConfig, SceneBundle, generate_synthetic_scene
from .simplify import simplify


def _load_config(args) -> PipelineConfig:
    data = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            data = json.load(f)
    cfg = PipelineConfig.from_dict(data)
    for key in cfg.to_dict():
        flag = getattr(args, key, None)
        if flag is not None:
            setattr(cfg, key, type(getattr(cfg, key))(flag))
    return cfg


def _emit(args, payload: dict, human: list[str]) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True, indent=2))
    else:
        for line in human:
            print(line)


def _load_bundle(args) -> SceneBundle:
    bundle = pio.load_scene(args.scene)
    cfg = _load_config(args)
    if getattr(args, "config", None) or any(
            getattr(args, key, None) is not None for key in cfg.to_dict()):
        bundle.config = cfg
    return bundle


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    defaults = PipelineConfig()
    parser.add_argument("--config", help="JSON config file overriding defaults")
    for key, value in defaults.to_dict().items():
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                            type=type(value), help=f"override {key} (default {value})")


def cmd_gen_scene(args) -> dict:
    cfg = _load_config(args)
    bundle = generate_synthetic_scene(
        seed=args.seed, extent=args.extent, box_count=args.boxes,
        anchor_count=args.anchors, camera_count=args.cameras,
        width=args.width, height=args.height, config=cfg)
    manifest = pio.save_scene(bundle, args.out)
    payload = {
        "manifest": str(manifest),
        "faces": int(len(bundle.proxy_mesh.faces)),
        "clusters": len(bundle.clusters or []),
        "anchors": bundle.anchors.count,
        "cameras": len(bundle.cameras),
    }
    return payload


def cmd_simplify(args) -> dict:
    mesh = pio.load_mesh(args.mesh).validate()
    cfg = _load_config(args)
    result = simplify(mesh, args.target_faces, cfg.boundary_weight, cfg.feature_angle_deg)
    pio.save_mesh(result, args.out)
    return {"input_faces": int(len(mesh.faces)), "output_faces": int(len(result.faces)),
            "out": str(args.out)}


def cmd_cluster(args) -> dict:
    mesh = pio.load_mesh(args.mesh).validate()
    cfg = _load_config(args)
    clusters = build_clusters(mesh, cfg.tau_min, cfg.tau_max)
    pio.save_clusters(clusters, args.out)
    sizes = [len(c.triangle_indices) for c in clusters]
    return {"clusters": len(clusters), "min_size": min(sizes, default=0),
            "max_size": max(sizes, default=0), "out": str(args.out)}


def cmd_depth(args) -> dict:
    bundle = _load_bundle(args)
    depth, mask, stats = run_pipeline(bundle, args.camera)
    pio.save_depth_pfm(depth, args.out)
    if args.raw:
        pio.save_depth_raw(depth, args.raw)
    covered = float((depth.values < 1.0).mean())
    return {"out": str(args.out), "width": depth.width, "height": depth.height,
            "coverage": covered, "clusters_drawn": stats.clusters_drawn,
            "clusters_frustum_culled": stats.clusters_frustum_culled}


def cmd_cull_anchors(args) -> dict:
    bundle = _load_bundle(args)
    depth, mask, stats = run_pipeline(bundle, args.camera)
    pio.save_cull_mask(mask, args.out, camera_id=args.camera)
    return {"out": str(args.out), "gamma": mask.gamma, "counts": mask.counts(),
            "kept_fraction": mask.kept_count / max(bundle.anchors.count, 1)}


def cmd_densify_plan(args) -> dict:
    bundle = _load_bundle(args)
    camera = bundle.cameras[args.camera]
    error = pio.load_error_image(args.error)
    if (error.width, error.height) != (camera.width, camera.height):
        raise ValueError(
            f"error image {error.width}x{error.height} does not match "
            f"viewport {camera.width}x{camera.height}")
    depth, _, _ = run_pipeline(bundle, args.camera)
    patches = select_patches(error, bundle.config.patch_size)
    lo, hi = bundle.proxy_mesh.aabb()
    grid = ProxyGrid.for_aabb(lo, hi, bundle.config.grid_capacity,
                              bundle.config.grid_cells_per_diagonal)
    plan = plan_anchors(patches, depth, camera, grid, frame_id=args.camera)
    pio.save_plan(plan, args.out)
    return {"out": str(args.out), "selected_patches": int(patches.selected.sum()),
            "new_anchors": int(len(plan.new_anchor_positions)),
            "rejected": plan.rejected_count}


def cmd_bench(args) -> dict:
    bundle = _load_bundle(args)
    camera = bundle.cameras[args.camera]
    mesh = bundle.proxy_mesh
    frames = args.frames

    from .kernels import load_impl
    backends = [backend_name()]
    if args.compare_backends:
        backends = []
        try:
            load_impl("numba")
            backends.append("numba")
        except ImportError:
            pass
        backends.append("numpy")

    results = {}
    for name in backends:
        impl = load_impl(name)
        tris = prepare_screen_triangles(mesh, camera)
        depth_t, filter_t, total_t = [], [], []
        # warm-up (JIT compilation, caches)
        for _ in range(3):
            buf = np.full((camera.height, camera.width), 1.0, dtype=np.float32)
            impl.fill_depth(buf, tris.vx, tris.vy, tris.dx, tris.dy, tris.tl,
                            tris.alpha, tris.beta, tris.delta, tris.zmin32,
                            tris.ix0, tris.ix1, tris.iy0, tris.iy1,
                            bundle.config.tile_size)
        for _ in range(frames):
            t0 = time.perf_counter()
            buf = np.full((camera.height, camera.width), 1.0, dtype=np.float32)
            impl.fill_depth(buf, tris.vx, tris.vy, tris.dx, tris.dy, tris.tl,
                            tris.alpha, tris.beta, tris.delta, tris.zmin32,
                            tris.ix0, tris.ix1, tris.iy0, tris.iy1,
                            bundle.config.tile_size)
            pyramid = [buf]
            while pyramid[-1].shape != (1, 1):
                pyramid.append(impl.hiz_reduce(pyramid[-1]))
            t1 = time.perf_counter()
            impl.cull_anchors_kernel(
                bundle.anchors.positions, camera.view_matrix, camera.proj_matrix,
                buf, camera.near, camera.far, bundle.config.gamma,
                bundle.config.tau_near, bundle.config.eps)
            t2 = time.perf_counter()
            depth_t.append((t1 - t0) * 1e3)
            filter_t.append((t2 - t1) * 1e3)
            total_t.append((t2 - t0) * 1e3)
        results[name] = {
            "depth_ms": statistics.median(depth_t),
            "filter_ms": statistics.median(filter_t),
            "total_ms": statistics.median(total_t),
            "remainder_ms": statistics.median(total_t) - statistics.median(depth_t)
                            - statistics.median(filter_t),
        }
    return {"frames": frames, "width": camera.width, "height": camera.height,
            "triangles": int(len(mesh.faces)), "anchors": bundle.anchors.count,
            "backends": results}


def cmd_oracle(args) -> dict:
    bundle = _load_bundle(args)
    report = oracle_suite(bundle, args.camera)
    payload = report.to_dict()
    if not report.all_passed:
        payload["exit_code"] = 1
    return payload


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxycull",
                                     description="proxy-mesh occlusion culling toolkit")
    parser.add_argument("--json", action="store_true", help="emit JSON on stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", help="generate a seeded synthetic street scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--extent", type=float, default=120.0)
    p.add_argument("--boxes", type=int, default=50)
    p.add_argument("--anchors", type=int, default=100_000)
    p.add_argument("--cameras", type=int, default=4)
    p.add_argument("--width", type=int, default=1000)
    p.add_argument("--height", type=int, default=1000)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("simplify", help="QEM-simplify a mesh to a proxy")
    p.add_argument("--mesh", required=True)
    p.add_argument("--target-faces", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_simplify)

    p = sub.add_parser("cluster", help="build the cluster sidecar for a mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("depth", help="render a proxy depth map")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera", type=int, default=0)
    p.add_argument("--out", required=True, help="PFM output path")
    p.add_argument("--raw", help="also write raw f32 + JSON sidecar here")
    _add_config_flags(p)
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("cull-anchors", help="run the full anchor filter")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_config_flags(p)  # includes --gamma
    p.set_defaults(func=cmd_cull_anchors)

    p = sub.add_parser("densify-plan", help="plan surface-projected anchors from an error image")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera", type=int, default=0)
    p.add_argument("--error", required=True, help="per-pixel loss image (PFM)")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_densify_plan)

    p = sub.add_parser("bench", help="time the depth / filter stages")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera", type=int, default=0)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--compare-backends", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle", help="run the brute-force oracle suite")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera", type=int, default=0)
    _add_config_flags(p)
    p.set_defaults(func=cmd_oracle)

    return parser


def _human_lines(command: str, payload: dict) -> list[str]:
    if command == "bench":
        lines = [f"bench: {payload['triangles']} tris, {payload['anchors']} anchors, "
                 f"{payload['width']}x{payload['height']}, median of {payload['frames']} frames"]
        for name, r in payload["backends"].items():
            lines.append(f"  [{name}] depth {r['depth_ms']:.2f} ms | "
                         f"filter {r['filter_ms']:.2f} ms | total {r['total_ms']:.2f} ms")
        return lines
    if command == "oracle":
        lines = []
        for r in payload["results"]:
            status = "PASS" if r["passed"] else "FAIL"
            tail = f" — {r['detail']}" if r["detail"] else ""
            lines.append(f"{status} {r['name']} ({r['checked']} checks){tail}")
        lines.append("all oracles passed" if payload["all_passed"] else "ORACLE FAILURES")
        return lines
    return [f"{k}: {v}" for k, v in sorted(payload.items())]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        payload = args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        err = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 1
    code = int(payload.pop("exit_code", 0))
    _emit(args, payload, _human_lines(args.command, payload))
    return code


if __name__ == "__main__":
    sys.exit(main())
