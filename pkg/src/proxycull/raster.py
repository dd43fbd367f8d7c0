"""Software depth-only rasterizer.

Produces hardware-convention depth buffers: float32 in [0, 1], 0 at the
near plane, background pixels hold exactly 1.0. Sample point is the pixel
center (u + 0.5, v + 0.5); coverage ties on shared edges follow the
top-left rule, and the per-pixel merge keeps the minimum depth, so the
result is independent of triangle submission order and of how tiles are
scheduled across workers.

Triangles straddling the near gate are clipped against w = tau_near
(Sutherland-Hodgman in clip space) before the perspective division;
interpolated depth is clamped into [0, 1] (no far clipping).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import BACKEND
from .camera import Camera, TAU_NEAR
from .kernels import fill_depth
from .mesh import TriangleMesh


@dataclass
class DepthMap:
    """Float32 depth grid plus the near/far range it was rendered with."""

    values: np.ndarray
    near: float
    far: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError("depth values must be a 2-D grid")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def invariant_violations(self) -> list[str]:
        errs = []
        if not np.all(np.isfinite(self.values)):
            errs.append("depth map contains non-finite values")
        elif self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            errs.append("depth values outside [0, 1]")
        if not (0.0 < self.near < self.far):
            errs.append(f"invalid near/far ({self.near}, {self.far})")
        return errs

    def validate(self) -> "DepthMap":
        errs = self.invariant_violations()
        if errs:
            raise ValueError("; ".join(errs))
        return self


def _clip_space_vertices(vertices: np.ndarray, camera: Camera) -> np.ndarray:
    """(V, 4) clip-space coordinates of all mesh vertices."""
    x, y, z = vertices[:, 0], vertices[:, 1], vertices[:, 2]
    v = camera.view_matrix
    pr = camera.proj_matrix
    vx = v[0, 0] * x + v[0, 1] * y + v[0, 2] * z + v[0, 3]
    vy = v[1, 0] * x + v[1, 1] * y + v[1, 2] * z + v[1, 3]
    vz = v[2, 0] * x + v[2, 1] * y + v[2, 2] * z + v[2, 3]
    vw = v[3, 0] * x + v[3, 1] * y + v[3, 2] * z + v[3, 3]
    out = np.empty((len(vertices), 4), dtype=np.float64)
    for row in range(4):
        out[:, row] = (pr[row, 0] * vx + pr[row, 1] * vy
                       + pr[row, 2] * vz + pr[row, 3] * vw)
    return out


def _clip_poly_near(poly: np.ndarray, tau: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a clip-space polygon against w = tau."""
    out = []
    n = len(poly)
    for i in range(n):
        a = poly[i]
        b = poly[(i + 1) % n]
        ina = a[3] > tau
        inb = b[3] > tau
        if ina:
            out.append(a)
        if ina != inb:
            t = (tau - a[3]) / (b[3] - a[3])
            out.append(a + t * (b - a))
    return np.array(out) if out else np.empty((0, 4))


@dataclass
class ScreenTriangles:
    """Rasterizer-ready triangle pack (already clipped, CCW, on-screen)."""

    vx: np.ndarray      # (F, 3) edge evaluation base x (canonical endpoint)
    vy: np.ndarray      # (F, 3) edge evaluation base y
    dx: np.ndarray      # (F, 3) edge delta x, edge k goes vertex k -> k+1
    dy: np.ndarray      # (F, 3) edge delta y
    tl: np.ndarray      # (F, 3) uint8 top-left tie acceptance
    alpha: np.ndarray   # (F,)  depth plane z = alpha*px + beta*py + delta
    beta: np.ndarray
    delta: np.ndarray
    zmin32: np.ndarray  # (F,)  float32 lower bound of written depths
    ix0: np.ndarray     # (F,)  inclusive pixel bbox, pre-clamped to screen
    ix1: np.ndarray
    iy0: np.ndarray
    iy1: np.ndarray

    @property
    def count(self) -> int:
        return self.vx.shape[0]


def prepare_screen_triangles(mesh: TriangleMesh, camera: Camera,
                             face_indices: np.ndarray | None = None,
                             tau_near: float = TAU_NEAR) -> ScreenTriangles:
    """Transform, clip and set up triangles for the fill kernels.

    The numba backend packs via its jitted twin; both setups evaluate the
    same expressions, so the per-pixel inputs agree bit for bit.
    """
    faces = mesh.faces if face_indices is None else mesh.faces[np.asarray(face_indices, dtype=np.int64)]
    width, height = camera.width, camera.height
    if len(faces) == 0:
        return _empty_pack()

    if BACKEND == "numba":
        from .kernels.numba_impl import setup_screen_triangles
        cap = 2 * len(faces)
        out = ScreenTriangles(
            vx=np.empty((cap, 3)), vy=np.empty((cap, 3)),
            dx=np.empty((cap, 3)), dy=np.empty((cap, 3)),
            tl=np.empty((cap, 3), dtype=np.uint8),
            alpha=np.empty(cap), beta=np.empty(cap), delta=np.empty(cap),
            zmin32=np.empty(cap, dtype=np.float32),
            ix0=np.empty(cap, dtype=np.int64), ix1=np.empty(cap, dtype=np.int64),
            iy0=np.empty(cap, dtype=np.int64), iy1=np.empty(cap, dtype=np.int64),
        )
        n = setup_screen_triangles(
            mesh.vertices, np.ascontiguousarray(faces),
            camera.view_matrix, camera.proj_matrix, tau_near, width, height,
            out.vx, out.vy, out.dx, out.dy, out.tl,
            out.alpha, out.beta, out.delta, out.zmin32,
            out.ix0, out.ix1, out.iy0, out.iy1)
        return _truncate(out, n)

    clip = _clip_space_vertices(mesh.vertices, camera)
    corners = clip[faces]  # (F, 3, 4)
    w = corners[..., 3]
    all_front = (w > tau_near).all(axis=1)
    all_behind = (w <= tau_near).all(axis=1)
    straddle = ~all_front & ~all_behind

    polys = [corners[all_front]]
    for tri in corners[straddle]:
        poly = _clip_poly_near(tri, tau_near)
        if len(poly) >= 3:
            fan = np.stack([np.stack([poly[0], poly[i], poly[i + 1]])
                            for i in range(1, len(poly) - 1)])
            polys.append(fan)
    clipped = np.concatenate([p for p in polys if len(p)]) if any(len(p) for p in polys) else np.empty((0, 3, 4))
    if len(clipped) == 0:
        return _empty_pack()

    ndc = clipped[..., :3] / clipped[..., 3:4]
    sx = (ndc[..., 0] + 1.0) * 0.5 * width
    sy = (ndc[..., 1] + 1.0) * 0.5 * height
    return _pack_screen_triangles(sx, sy, ndc[..., 2], width, height)


def _empty_pack() -> ScreenTriangles:
    return ScreenTriangles(
        vx=np.empty((0, 3)), vy=np.empty((0, 3)), dx=np.empty((0, 3)),
        dy=np.empty((0, 3)), tl=np.empty((0, 3), dtype=np.uint8),
        alpha=np.empty(0), beta=np.empty(0), delta=np.empty(0),
        zmin32=np.empty(0, dtype=np.float32),
        ix0=np.empty(0, dtype=np.int64), ix1=np.empty(0, dtype=np.int64),
        iy0=np.empty(0, dtype=np.int64), iy1=np.empty(0, dtype=np.int64))


def _truncate(pack: ScreenTriangles, n: int) -> ScreenTriangles:
    return ScreenTriangles(
        vx=pack.vx[:n], vy=pack.vy[:n], dx=pack.dx[:n], dy=pack.dy[:n],
        tl=pack.tl[:n], alpha=pack.alpha[:n], beta=pack.beta[:n],
        delta=pack.delta[:n], zmin32=pack.zmin32[:n],
        ix0=pack.ix0[:n], ix1=pack.ix1[:n], iy0=pack.iy0[:n], iy1=pack.iy1[:n])


def _pack_screen_triangles(sx, sy, sz, width, height) -> ScreenTriangles:
    sx = np.asarray(sx, dtype=np.float64).reshape(-1, 3).copy()
    sy = np.asarray(sy, dtype=np.float64).reshape(-1, 3).copy()
    sz = np.asarray(sz, dtype=np.float64).reshape(-1, 3).copy()

    # consistent winding: signed area > 0 (y-down screen space)
    area2 = ((sx[:, 1] - sx[:, 0]) * (sy[:, 2] - sy[:, 0])
             - (sy[:, 1] - sy[:, 0]) * (sx[:, 2] - sx[:, 0]))
    flip = area2 < 0.0
    sx[flip, 1], sx[flip, 2] = sx[flip, 2], sx[flip, 1].copy()
    sy[flip, 1], sy[flip, 2] = sy[flip, 2], sy[flip, 1].copy()
    sz[flip, 1], sz[flip, 2] = sz[flip, 2], sz[flip, 1].copy()
    area2 = np.abs(area2)

    # reject degenerates and triangles whose bbox misses the screen
    minx = sx.min(axis=1)
    maxx = sx.max(axis=1)
    miny = sy.min(axis=1)
    maxy = sy.max(axis=1)
    ix0 = np.maximum(np.floor(minx - 0.5), 0.0)
    ix1 = np.minimum(np.ceil(maxx - 0.5), float(width - 1))
    iy0 = np.maximum(np.floor(miny - 0.5), 0.0)
    iy1 = np.minimum(np.ceil(maxy - 0.5), float(height - 1))
    keep = (area2 > 0.0) & (ix0 <= ix1) & (iy0 <= iy1)
    sx, sy, sz = sx[keep], sy[keep], sz[keep]
    ix0, ix1, iy0, iy1 = ix0[keep], ix1[keep], iy0[keep], iy1[keep]
    area2 = area2[keep]

    nxt = [1, 2, 0]
    dx = sx[:, nxt] - sx
    dy = sy[:, nxt] - sy
    tl = ((dy < 0.0) | ((dy == 0.0) & (dx > 0.0))).astype(np.uint8)
    # canonical evaluation base per edge: the lexicographically smaller
    # endpoint by (y, x), so shared edges negate exactly across triangles
    canon = (sy < sy[:, nxt]) | ((sy == sy[:, nxt]) & (sx <= sx[:, nxt]))
    ex = np.where(canon, sx, sx[:, nxt])
    ey = np.where(canon, sy, sy[:, nxt])

    # depth plane z = alpha*px + beta*py + delta (z/w is affine in screen space)
    z10 = sz[:, 1] - sz[:, 0]
    z20 = sz[:, 2] - sz[:, 0]
    x10 = sx[:, 1] - sx[:, 0]
    x20 = sx[:, 2] - sx[:, 0]
    y10 = sy[:, 1] - sy[:, 0]
    y20 = sy[:, 2] - sy[:, 0]
    det = x10 * y20 - x20 * y10
    alpha = (z10 * y20 - z20 * y10) / det
    beta = (x10 * z20 - x20 * z10) / det
    delta = sz[:, 0] - alpha * sx[:, 0] - beta * sy[:, 0]

    zmin = np.clip(sz.min(axis=1), 0.0, 1.0)
    return ScreenTriangles(
        vx=ex, vy=ey, dx=dx, dy=dy, tl=tl,
        alpha=alpha, beta=beta, delta=delta,
        zmin32=zmin.astype(np.float32),
        ix0=ix0.astype(np.int64), ix1=ix1.astype(np.int64),
        iy0=iy0.astype(np.int64), iy1=iy1.astype(np.int64),
    )


def rasterize_depth(mesh: TriangleMesh, camera: Camera,
                    face_indices: np.ndarray | None = None,
                    tile_size: int = 64,
                    tau_near: float = TAU_NEAR) -> DepthMap:
    """Render all (or the selected) triangles into a fresh depth buffer."""
    tris = prepare_screen_triangles(mesh, camera, face_indices, tau_near)
    depth = np.full((camera.height, camera.width), 1.0, dtype=np.float32)
    fill_depth(depth, tris.vx, tris.vy, tris.dx, tris.dy, tris.tl,
               tris.alpha, tris.beta, tris.delta, tris.zmin32,
               tris.ix0, tris.ix1, tris.iy0, tris.iy1, tile_size)
    return DepthMap(depth, camera.near, camera.far)
