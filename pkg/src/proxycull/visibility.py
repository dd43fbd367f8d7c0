"""Per-frame visibility: frustum planes, Hi-Z cluster occlusion and the
fused anchor filter.

The anchor filter is the load-bearing path: project each anchor, map it
to a pixel, read the proxy depth there, add the safety margin gamma to
the linearized depth and cull the anchor when its view-space depth lies
behind. Background pixels (exactly 1.0) never occlude. The fused kernels
and the staged per-anchor path produce identical verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera, EPS_DIV, TAU_NEAR, linearize_depth, ndc_to_pixel, project
from .clusters import Cluster, screen_rect, snap_level, conservative_depth
from .hiz import HiZPyramid, rect_max
from .kernels import (VERDICT_KEPT, VERDICT_NEAR, VERDICT_OCCLUDED,
                      VERDICT_OFFSCREEN, cull_anchors_kernel)
from .raster import DepthMap

# conservative bias on the cluster test: the depth buffer is float32 and
# the corner projection takes a different arithmetic route than the
# rasterizer, so equality-grade comparisons need headroom before a cluster
# may be declared occluded
HIZ_DEPTH_BIAS = 1e-6

VERDICT_NAMES = {
    VERDICT_KEPT: "kept",
    VERDICT_NEAR: "culled_near",
    VERDICT_OFFSCREEN: "culled_offscreen",
    VERDICT_OCCLUDED: "culled_occluded",
}


@dataclass
class FrustumPlanes:
    """Six planes (inward normal, offset): inside points give n.x + d > 0."""

    normals: np.ndarray  # (6, 3)
    offsets: np.ndarray  # (6,)

    def signed_distances(self, points: np.ndarray) -> np.ndarray:
        """(N, 6) plane evaluations for world points."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return pts @ self.normals.T + self.offsets

    def contains(self, points: np.ndarray) -> np.ndarray:
        return (self.signed_distances(points) > 0.0).all(axis=1)


@dataclass
class AnchorSet:
    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64).reshape(-1, 3))

    @property
    def count(self) -> int:
        return len(self.positions)

    def validate(self) -> "AnchorSet":
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("anchor positions must be finite")
        return self


@dataclass
class CullMask:
    """Per-anchor verdict codes (see VERDICT_NAMES) plus summary counts."""

    verdicts: np.ndarray
    gamma: float

    def __post_init__(self):
        self.verdicts = np.asarray(self.verdicts, dtype=np.uint8)

    @property
    def kept_count(self) -> int:
        return int((self.verdicts == VERDICT_KEPT).sum())

    def counts(self) -> dict[str, int]:
        return {name: int((self.verdicts == code).sum())
                for code, name in sorted(VERDICT_NAMES.items())}


def extract_frustum(camera: Camera) -> FrustumPlanes:
    """Six normalized planes from the combined P @ V matrix.

    Row combinations follow the clip-volume bounds -w <= x,y <= w and
    0 <= z <= w of this package's depth convention.
    """
    m = camera.pv
    rows = [
        m[3] + m[0],   # left
        m[3] - m[0],   # right
        m[3] + m[1],   # top (y_ndc >= -1)
        m[3] - m[1],   # bottom
        m[2],          # near (z_clip >= 0)
        m[3] - m[2],   # far
    ]
    normals = np.empty((6, 3))
    offsets = np.empty(6)
    for i, row in enumerate(rows):
        n = row[:3]
        ln = np.linalg.norm(n)
        if ln == 0.0:
            raise ValueError("degenerate projection: frustum plane has zero normal")
        normals[i] = n / ln
        offsets[i] = row[3] / ln
    return FrustumPlanes(normals, offsets)


def frustum_cull(clusters: list[Cluster], planes: FrustumPlanes) -> np.ndarray:
    """True where a cluster is culled: all 8 corners outside one plane."""
    out = np.zeros(len(clusters), dtype=bool)
    for i, cluster in enumerate(clusters):
        d = planes.signed_distances(cluster.corners())
        out[i] = bool((d.max(axis=0) < 0.0).any())
    return out


def occlusion_cull_clusters(clusters: list[Cluster], camera: Camera,
                            pyramid: HiZPyramid, c: int = 1, padding: int = 1,
                            depth_bias: float = HIZ_DEPTH_BIAS) -> np.ndarray:
    """True where the Hi-Z test proves a cluster hidden.

    Clusters with empty rects or near-plane-straddling AABBs are never
    marked occluded here. The conservative depth is biased down by
    ``depth_bias`` before the comparison so that a cluster can never
    occlude itself out of the same frame's pyramid.
    """
    out = np.zeros(len(clusters), dtype=bool)
    for i, cluster in enumerate(clusters):
        rect = screen_rect(cluster, camera, padding)
        if rect.empty:
            continue
        z_near = conservative_depth(cluster, camera)
        if z_near is None:
            continue
        level, snapped = snap_level(rect, c, pyramid.max_level)
        h, w = pyramid.level_shape(level)
        x0 = min(snapped.x_min, w - 1)
        y0 = min(snapped.y_min, h - 1)
        x1 = min(snapped.x_max, w - 1)
        y1 = min(snapped.y_max, h - 1)
        farthest = rect_max(pyramid, level, x0, y0, x1, y1)
        out[i] = (z_near - depth_bias) >= farthest
    return out


def cull_anchors(anchors: AnchorSet, camera: Camera, depth: DepthMap,
                 gamma: float, tau_near: float = TAU_NEAR,
                 eps: float = EPS_DIV) -> CullMask:
    """Fused projection + depth test for every anchor."""
    if gamma < 0.0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if depth.values.shape != (camera.height, camera.width):
        raise ValueError(
            f"depth map {depth.values.shape} does not match viewport "
            f"({camera.height}, {camera.width})"
        )
    verdicts = cull_anchors_kernel(
        anchors.positions, camera.view_matrix, camera.proj_matrix,
        depth.values, float(depth.near), float(depth.far), float(gamma),
        float(tau_near), float(eps))
    return CullMask(verdicts, gamma)


def depth_test_operands(camera: Camera, p_world, depth: DepthMap,
                        gamma: float) -> dict | None:
    """Diagnostic: both candidate left operands of the anchor depth test.

    The production test compares the anchor's view-space depth against the
    linearized proxy depth plus gamma; the raw clip-space z is reported
    alongside for inspection since the two live in different spaces and
    only the view-space reading is dimensionally consistent with d_hat.
    Returns None when the anchor has no valid pixel.
    """
    ndc = project(camera, p_world)
    if not ndc.valid:
        return None
    pix = ndc_to_pixel(ndc, camera.width, camera.height)
    if not pix.in_bounds:
        return None
    z_hw = float(depth.values[pix.y_pix, pix.x_pix])
    d_hat = None if z_hw == 1.0 else linearize_depth(z_hw, depth.near, depth.far) + gamma
    return {
        "view_depth": ndc.d_view,
        "clip_z": ndc.z_ndc * (ndc.w_clip + EPS_DIV),
        "z_hw": z_hw,
        "d_hat": d_hat,
        "culled": d_hat is not None and ndc.d_view > d_hat,
    }


def cull_anchors_staged(anchors: AnchorSet, camera: Camera, depth: DepthMap,
                        gamma: float, tau_near: float = TAU_NEAR,
                        eps: float = EPS_DIV) -> CullMask:
    """Same test assembled from the individual geometry ops.

    One anchor at a time through project -> ndc_to_pixel -> depth read ->
    linearize -> compare; verdict-for-verdict equal to the fused kernel.
    Intended for verification, not speed.
    """
    values = depth.values
    verdicts = np.empty(anchors.count, dtype=np.uint8)
    for i, pos in enumerate(anchors.positions):
        ndc = project(camera, pos, tau_near, eps)
        if not ndc.valid:
            verdicts[i] = VERDICT_NEAR
            continue
        pix = ndc_to_pixel(ndc, camera.width, camera.height)
        if not pix.in_bounds:
            verdicts[i] = VERDICT_OFFSCREEN
            continue
        z_hw = values[pix.y_pix, pix.x_pix]
        if z_hw == np.float32(1.0):
            verdicts[i] = VERDICT_KEPT
            continue
        d_hat = linearize_depth(float(z_hw), depth.near, depth.far) + gamma
        verdicts[i] = VERDICT_OCCLUDED if ndc.d_view > d_hat else VERDICT_KEPT
    return CullMask(verdicts, gamma)
