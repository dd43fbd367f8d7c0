"""Surface-guided densification planning.

High-error image patches (patch mean loss strictly above three times the
frame mean of patch losses) are back-projected through the proxy depth
map onto the surface; the resulting candidate anchors pass through a
capacity-limited voxel grid that deduplicates across patches and frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import Camera, back_project, linearize_depth
from .raster import DepthMap

DEFAULT_PATCH_SIZE = 16
DEFAULT_GRID_CAPACITY = 4
SELECTION_FACTOR = 3.0


@dataclass
class ErrorImage:
    """Per-pixel non-negative loss (e.g. patch-wise L1), supplied externally."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("error image must be 2-D")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def validate(self) -> "ErrorImage":
        if not np.all(np.isfinite(self.values)):
            raise ValueError("error image contains non-finite values")
        if self.values.size and self.values.min() < 0.0:
            raise ValueError("error image contains negative losses")
        return self


@dataclass
class PatchGrid:
    """Patch tiling with per-patch mean loss and the selection mask."""

    patch_size: int
    patch_loss: np.ndarray   # (py, px) mean loss per patch
    frame_mean: float        # mean over patches
    selected: np.ndarray     # (py, px) bool
    image_width: int
    image_height: int

    def patch_bounds(self, px: int, py: int) -> tuple[int, int, int, int]:
        """(x0, y0, x1_excl, y1_excl) pixel bounds; edge patches are partial."""
        x0 = px * self.patch_size
        y0 = py * self.patch_size
        return (x0, y0,
                min(x0 + self.patch_size, self.image_width),
                min(y0 + self.patch_size, self.image_height))

    def representative_pixel(self, px: int, py: int) -> tuple[int, int]:
        """Center of the patch's actual extent."""
        x0, y0, x1, y1 = self.patch_bounds(px, py)
        return (x0 + (x1 - x0) // 2, y0 + (y1 - y0) // 2)


def select_patches(error: ErrorImage, patch_size: int = DEFAULT_PATCH_SIZE) -> PatchGrid:
    """Tile the loss image and select patches with mean > 3x the frame mean."""
    if patch_size < 1:
        raise ValueError(f"patch_size must be >= 1, got {patch_size}")
    h, w = error.height, error.width
    if h < patch_size or w < patch_size:
        raise ValueError(f"image {w}x{h} smaller than patch size {patch_size}")
    npx = math.ceil(w / patch_size)
    npy = math.ceil(h / patch_size)
    loss = np.empty((npy, npx))
    for py in range(npy):
        for px in range(npx):
            x0 = px * patch_size
            y0 = py * patch_size
            block = error.values[y0:min(y0 + patch_size, h), x0:min(x0 + patch_size, w)]
            loss[py, px] = block.mean()
    frame_mean = float(loss.mean())
    selected = loss > SELECTION_FACTOR * frame_mean
    return PatchGrid(patch_size, loss, frame_mean, selected, w, h)


@dataclass
class ProxyGrid:
    """Capacity-limited voxel occupancy over the proxy volume."""

    origin: np.ndarray
    cell_size: float
    capacity: int
    occupancy: dict[tuple[int, int, int], int] = field(default_factory=dict)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        if self.cell_size <= 0.0:
            raise ValueError(f"cell_size must be > 0, got {self.cell_size}")
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")

    def cell_of(self, position) -> tuple[int, int, int]:
        p = np.asarray(position, dtype=np.float64)
        return tuple(int(math.floor(v)) for v in (p - self.origin) / self.cell_size)

    def insert(self, position) -> bool:
        """Admit the point unless its cell is already at capacity."""
        cell = self.cell_of(position)
        count = self.occupancy.get(cell, 0)
        if count >= self.capacity:
            return False
        self.occupancy[cell] = count + 1
        return True

    @classmethod
    def for_aabb(cls, aabb_min, aabb_max, capacity: int = DEFAULT_GRID_CAPACITY,
                 cells_per_diagonal: float = 512.0) -> "ProxyGrid":
        lo = np.asarray(aabb_min, dtype=np.float64)
        hi = np.asarray(aabb_max, dtype=np.float64)
        diag = float(np.linalg.norm(hi - lo))
        if diag == 0.0:
            diag = 1.0
        return cls(lo, diag / cells_per_diagonal, capacity)


def grid_insert(grid: ProxyGrid, position) -> bool:
    return grid.insert(position)


@dataclass
class DensificationPlan:
    """New anchor positions plus their provenance and rejection count."""

    new_anchor_positions: np.ndarray
    sources: list[tuple[int, int, int]]  # (frame_id, patch_x, patch_y)
    rejected_count: int

    def __post_init__(self):
        self.new_anchor_positions = np.asarray(self.new_anchor_positions, dtype=np.float64).reshape(-1, 3)


def plan_anchors(patches: PatchGrid, depth: DepthMap, camera: Camera,
                 grid: ProxyGrid, frame_id: int = 0) -> DensificationPlan:
    """Back-project every selected patch's center through the proxy depth.

    Patch iteration is row-major so capacity contention resolves
    deterministically; background centers (depth exactly 1.0) are skipped
    without counting as rejections.
    """
    if depth.values.shape != (camera.height, camera.width):
        raise ValueError(
            f"depth map {depth.values.shape} does not match viewport "
            f"({camera.height}, {camera.width})"
        )
    if (patches.image_width, patches.image_height) != (camera.width, camera.height):
        raise ValueError(
            f"patch grid {patches.image_width}x{patches.image_height} does not "
            f"match viewport {camera.width}x{camera.height}"
        )
    positions = []
    sources = []
    rejected = 0
    npy, npx = patches.selected.shape
    for py in range(npy):
        for px in range(npx):
            if not patches.selected[py, px]:
                continue
            u, v = patches.representative_pixel(px, py)
            z_hw = depth.values[v, u]
            if z_hw == np.float32(1.0):
                continue
            d_mesh = linearize_depth(float(z_hw), depth.near, depth.far)
            point = back_project(camera, u, v, d_mesh)
            if grid.insert(point):
                positions.append(point)
                sources.append((frame_id, px, py))
            else:
                rejected += 1
    arr = np.array(positions) if positions else np.empty((0, 3))
    return DensificationPlan(arr, sources, rejected)
