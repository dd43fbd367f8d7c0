"""Triangle clusters: the granularity of frustum and occlusion culling.

Faces are sorted by the Morton code of their centroid and chunked into
runs of at most tau_max, which yields spatially coherent clusters with
tight AABBs at O(F log F) cost. Per view we derive a padded screen-space
rectangle, a pyramid level for the Hi-Z test, and a conservative
(nearest-possible) NDC depth from the AABB corners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import Camera, TAU_NEAR
from .mesh import TriangleMesh

DEFAULT_TAU_MIN = 32
DEFAULT_TAU_MAX = 128


@dataclass
class Cluster:
    triangle_indices: np.ndarray
    aabb_min: np.ndarray
    aabb_max: np.ndarray

    def __post_init__(self):
        self.triangle_indices = np.asarray(self.triangle_indices, dtype=np.int64)
        self.aabb_min = np.asarray(self.aabb_min, dtype=np.float64).reshape(3)
        self.aabb_max = np.asarray(self.aabb_max, dtype=np.float64).reshape(3)

    def corners(self) -> np.ndarray:
        """(8, 3) AABB corner positions."""
        lo, hi = self.aabb_min, self.aabb_max
        return np.array([[x, y, z] for x in (lo[0], hi[0])
                         for y in (lo[1], hi[1])
                         for z in (lo[2], hi[2])])


@dataclass
class ScreenRect:
    """Inclusive pixel-space rectangle; ``empty`` when nothing projects."""

    x_min: int = 0
    y_min: int = 0
    x_max: int = -1
    y_max: int = -1
    empty: bool = True

    @property
    def width(self) -> int:
        return 0 if self.empty else self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return 0 if self.empty else self.y_max - self.y_min + 1


def _part1by2(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64) & np.uint64(0x3FF)
    x = (x | (x << np.uint64(16))) & np.uint64(0x030000FF)
    x = (x | (x << np.uint64(8))) & np.uint64(0x0300F00F)
    x = (x | (x << np.uint64(4))) & np.uint64(0x030C30C3)
    x = (x | (x << np.uint64(2))) & np.uint64(0x09249249)
    return x


def morton_codes(points: np.ndarray) -> np.ndarray:
    """30-bit Morton codes of points quantized over their bounding box."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = hi - lo
    span[span == 0.0] = 1.0
    q = np.clip(((points - lo) / span) * 1023.0, 0.0, 1023.0).astype(np.uint64)
    return (_part1by2(q[:, 0])
            | (_part1by2(q[:, 1]) << np.uint64(1))
            | (_part1by2(q[:, 2]) << np.uint64(2)))


def build_clusters(mesh: TriangleMesh, tau_min: int = DEFAULT_TAU_MIN,
                   tau_max: int = DEFAULT_TAU_MAX) -> list[Cluster]:
    """Partition faces into Morton-ordered chunks of at most tau_max.

    All clusters have exactly tau_max faces except possibly one remainder
    (which may fall below tau_min).
    """
    if not (1 <= tau_min <= tau_max):
        raise ValueError(f"need 1 <= tau_min <= tau_max, got ({tau_min}, {tau_max})")
    n_faces = len(mesh.faces)
    if n_faces == 0:
        return []
    centroids = mesh.vertices[mesh.faces].mean(axis=1)
    codes = morton_codes(centroids)
    order = np.lexsort((np.arange(n_faces), codes))
    clusters = []
    for start in range(0, n_faces, tau_max):
        idx = np.sort(order[start:start + tau_max])
        pts = mesh.vertices[mesh.faces[idx]].reshape(-1, 3)
        clusters.append(Cluster(idx, pts.min(axis=0), pts.max(axis=0)))
    return clusters


def project_corners(cluster: Cluster, camera: Camera) -> np.ndarray:
    """(8, 4) clip-space coordinates of the AABB corners under P @ V."""
    pv = camera.pv
    pts = np.concatenate([cluster.corners(), np.ones((8, 1))], axis=1)
    return pts @ pv.T


def screen_rect(cluster: Cluster, camera: Camera, padding: int = 1,
                tau_near: float = TAU_NEAR) -> ScreenRect:
    """Padded, outward-rounded pixel bounds of the projected AABB.

    Corners at or behind the near gate make the 2-D bound meaningless; if
    all corners are behind the rect is empty, if only some are the full
    screen is returned (conservative).
    """
    if padding not in (0, 1):
        raise ValueError(f"padding must be 0 or 1, got {padding}")
    clip = project_corners(cluster, camera)
    w = clip[:, 3]
    width, height = camera.width, camera.height
    if np.all(w <= tau_near):
        return ScreenRect()
    if np.any(w <= tau_near):
        return ScreenRect(0, 0, width - 1, height - 1, empty=False)
    sx = (width / 2.0) * (clip[:, 0] / w + 1.0)
    sy = (height / 2.0) * (clip[:, 1] / w + 1.0)
    x0 = math.floor(sx.min()) - padding
    y0 = math.floor(sy.min()) - padding
    x1 = math.ceil(sx.max()) + padding
    y1 = math.ceil(sy.max()) + padding
    x0 = max(x0, 0)
    y0 = max(y0, 0)
    x1 = min(x1, width - 1)
    y1 = min(y1, height - 1)
    if x0 > x1 or y0 > y1:
        return ScreenRect()
    return ScreenRect(int(x0), int(y0), int(x1), int(y1), empty=False)


def snap_level(rect: ScreenRect, c: int = 1, max_level: int = 16) -> tuple[int, ScreenRect]:
    """Pick the Hi-Z level for a rect and snap it to that level's texels.

    level = clamp(floor(log2(max(width, height))) - c, 0, max_level) where
    width/height are the rect extents (max - min); the snapped bounds are
    floor(min / 2^level) and ceil(max / 2^level), the latter read as an
    inclusive texel index (callers clamp to the level's actual extent).
    """
    if rect.empty:
        raise ValueError("cannot snap an empty rect")
    if c not in (1, 2):
        raise ValueError(f"c must be 1 or 2, got {c}")
    extent = max(rect.x_max - rect.x_min, rect.y_max - rect.y_min)
    if extent < 1:
        level = 0
    else:
        level = max(0, min(int(math.floor(math.log2(extent))) - c, max_level))
    scale = 1 << level
    snapped = ScreenRect(
        rect.x_min // scale,
        rect.y_min // scale,
        math.ceil(rect.x_max / scale),
        math.ceil(rect.y_max / scale),
        empty=False,
    )
    return level, snapped


def conservative_depth(cluster: Cluster, camera: Camera) -> float | None:
    """Nearest possible NDC depth of the AABB; None means "skip the test".

    A corner with w <= 0 makes the projected depth unusable, so the whole
    cluster opts out of occlusion testing (frustum culling still applies).
    """
    clip = project_corners(cluster, camera)
    w = clip[:, 3]
    if np.any(w <= 0.0):
        return None
    z_ndc = clip[:, 2] / w
    return float(np.min(np.maximum(0.0, z_ndc)))
