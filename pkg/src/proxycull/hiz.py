"""Hierarchical-Z max pyramid over a depth buffer.

Each level halves both dimensions (ceil division); a texel stores the
maximum (farthest) depth of its 2x2 sources, with out-of-range source
indices clamped to the edge on odd dimensions. A texel at level l
therefore holds exactly the max over its level-0 footprint
[u*2^l, min((u+1)*2^l, W)) x [v*2^l, min((v+1)*2^l, H)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import hiz_reduce
from .raster import DepthMap


@dataclass
class HiZPyramid:
    """Full mip chain; level 0 is the base depth grid."""

    levels: list[np.ndarray]

    @property
    def max_level(self) -> int:
        return len(self.levels) - 1

    def level_shape(self, level: int) -> tuple[int, int]:
        return self.levels[level].shape


def build_hiz(depth: DepthMap | np.ndarray) -> HiZPyramid:
    """Reduce down to a 1x1 apex."""
    base = depth.values if isinstance(depth, DepthMap) else np.asarray(depth, dtype=np.float32)
    levels = [np.ascontiguousarray(base, dtype=np.float32)]
    while levels[-1].shape != (1, 1):
        levels.append(hiz_reduce(levels[-1]))
    return HiZPyramid(levels)


def rect_max(pyramid: HiZPyramid, level: int, x0: int, y0: int, x1: int, y1: int) -> float:
    """Max over the inclusive texel rect [x0..x1] x [y0..y1] at ``level``."""
    grid = pyramid.levels[level]
    h, w = grid.shape
    if not (0 <= x0 <= x1 < w and 0 <= y0 <= y1 < h):
        raise ValueError(f"rect [{x0}..{x1}]x[{y0}..{y1}] outside level {level} ({w}x{h})")
    return float(grid[y0:y1 + 1, x0:x1 + 1].max())


def footprint(level: int, u: int, v: int, base_width: int, base_height: int) -> tuple[int, int, int, int]:
    """Level-0 pixel range (x0, y0, x1_excl, y1_excl) covered by a texel."""
    scale = 1 << level
    return (u * scale, v * scale,
            min((u + 1) * scale, base_width),
            min((v + 1) * scale, base_height))
