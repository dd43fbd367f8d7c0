"""Per-frame pipeline: frustum cull -> depth raster -> Hi-Z -> anchor filter.

Two-phase scheme: phase 1 rasterizes every frustum-surviving cluster into
the depth buffer and builds the pyramid; phase 2 runs the Hi-Z cluster
test (reported as statistics: what a later frame could skip) and filters
the anchors against the phase-1 depth.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .hiz import build_hiz
from .raster import DepthMap, rasterize_depth
from .scene import SceneBundle
from .visibility import (CullMask, cull_anchors, extract_frustum, frustum_cull,
                         occlusion_cull_clusters)


@dataclass
class FrameStats:
    depth_ms: float
    filter_ms: float
    total_ms: float
    anchors_in: int
    anchors_kept: int
    clusters_drawn: int
    clusters_frustum_culled: int
    clusters_occlusion_culled: int

    @property
    def remainder_ms(self) -> float:
        return self.total_ms - self.depth_ms - self.filter_ms

    def invariant_violations(self) -> list[str]:
        errs = []
        if self.anchors_kept > self.anchors_in:
            errs.append("anchors_kept exceeds anchors_in")
        return errs

    def to_dict(self) -> dict:
        return {
            "depth_ms": self.depth_ms,
            "filter_ms": self.filter_ms,
            "remainder_ms": self.remainder_ms,
            "total_ms": self.total_ms,
            "anchors_in": self.anchors_in,
            "anchors_kept": self.anchors_kept,
            "clusters_drawn": self.clusters_drawn,
            "clusters_frustum_culled": self.clusters_frustum_culled,
            "clusters_occlusion_culled": self.clusters_occlusion_culled,
        }


def run_pipeline(bundle: SceneBundle, camera_index: int,
                 gamma: float | None = None) -> tuple[DepthMap, CullMask, FrameStats]:
    cfg = bundle.config
    camera = bundle.cameras[camera_index]
    clusters = bundle.ensure_clusters()
    if gamma is None:
        gamma = cfg.gamma

    t_start = time.perf_counter()

    planes = extract_frustum(camera)
    culled = frustum_cull(clusters, planes)
    survivors = [c for c, dead in zip(clusters, culled) if not dead]
    if survivors:
        face_indices = np.sort(np.concatenate([c.triangle_indices for c in survivors]))
    else:
        face_indices = np.empty(0, dtype=np.int64)

    t_depth0 = time.perf_counter()
    depth = rasterize_depth(bundle.proxy_mesh, camera, face_indices, cfg.tile_size,
                            cfg.tau_near)
    pyramid = build_hiz(depth)
    t_depth1 = time.perf_counter()

    occluded = occlusion_cull_clusters(survivors, camera, pyramid, cfg.level_bias,
                                       cfg.padding, cfg.hiz_depth_bias)

    t_filter0 = time.perf_counter()
    mask = cull_anchors(bundle.anchors, camera, depth, gamma, cfg.tau_near, cfg.eps)
    t_filter1 = time.perf_counter()

    n_frustum = int(culled.sum())
    n_occluded = int(occluded.sum())
    stats = FrameStats(
        depth_ms=(t_depth1 - t_depth0) * 1e3,
        filter_ms=(t_filter1 - t_filter0) * 1e3,
        total_ms=(t_filter1 - t_start) * 1e3,
        anchors_in=bundle.anchors.count,
        anchors_kept=mask.kept_count,
        clusters_drawn=len(clusters) - n_frustum - n_occluded,
        clusters_frustum_culled=n_frustum,
        clusters_occlusion_culled=n_occluded,
    )
    return depth, mask, stats
