"""Camera model and coordinate transforms.

Conventions (fixed across the whole package):
  - view space: x right, y down, z forward; depth is positive in front of
    the camera and equals the clip-space w of a standard perspective matrix.
  - clip z maps to [0, 1] after division (0 at the near plane, 1 at far).
  - matrices are row-major 4x4, points are column vectors, M @ p.
  - pixel (u, v) has its origin at the top-left; the continuous screen
    coordinate of the pixel's top-left corner is (u, v), its center
    (u + 0.5, v + 0.5).

Cameras supplied in the OpenGL convention (y up, -z forward, clip z in
[-1, 1]) are converted by :func:`normalize_convention` at load time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TAU_NEAR = 1e-4  # homogeneous-w validity gate
EPS_DIV = 1e-7   # guard added to w before the NDC division


class CameraError(ValueError):
    """Raised when camera fields violate their invariants."""


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with explicit view/projection matrices.

    ``rotation`` and ``center`` are the world-to-camera rotation R and the
    camera origin o, so view = R @ (p - o). ``intrinsics`` is the 3x3
    pinhole K in pixel units, kept consistent with ``proj_matrix``.
    """

    view_matrix: np.ndarray
    proj_matrix: np.ndarray
    rotation: np.ndarray
    center: np.ndarray
    intrinsics: np.ndarray
    near: float
    far: float
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "view_matrix", np.asarray(self.view_matrix, dtype=np.float64).reshape(4, 4))
        object.__setattr__(self, "proj_matrix", np.asarray(self.proj_matrix, dtype=np.float64).reshape(4, 4))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "intrinsics", np.asarray(self.intrinsics, dtype=np.float64).reshape(3, 3))

    # -- validation ------------------------------------------------------

    def invariant_violations(self) -> list[str]:
        """Collect every violated invariant (empty list = valid)."""
        errs = []
        if not (self.near > 0.0):
            errs.append(f"near must be > 0, got {self.near}")
        if not (self.far > self.near):
            errs.append(f"far must be > near, got far={self.far} near={self.near}")
        if self.width < 1 or self.height < 1:
            errs.append(f"viewport must be >= 1x1, got {self.width}x{self.height}")
        for name, m in (("view_matrix", self.view_matrix), ("proj_matrix", self.proj_matrix),
                        ("rotation", self.rotation), ("center", self.center),
                        ("intrinsics", self.intrinsics)):
            if not np.all(np.isfinite(m)):
                errs.append(f"{name} contains non-finite values")
        if not errs:
            scale = 1.0 + float(np.linalg.norm(self.center))
            origin = self.view_matrix @ np.append(self.center, 1.0)
            if np.linalg.norm(origin[:3]) > 1e-6 * scale:
                errs.append("view_matrix applied to center does not give the view-space origin")
            if np.linalg.norm(self.view_matrix[:3, :3] - self.rotation) > 1e-6:
                errs.append("view_matrix rotation block disagrees with rotation")
        return errs

    def validate(self) -> "Camera":
        errs = self.invariant_violations()
        if errs:
            raise CameraError("; ".join(errs))
        return self

    # -- derived quantities ----------------------------------------------

    @property
    def pv(self) -> np.ndarray:
        """Composed projection @ view, used by the cluster/frustum path."""
        return self.proj_matrix @ self.view_matrix

    @classmethod
    def look_at(cls, center, target, fov_y_deg: float, width: int, height: int,
                near: float, far: float, up=(0.0, 0.0, 1.0)) -> "Camera":
        """Build a consistent camera looking from ``center`` at ``target``."""
        center = np.asarray(center, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        up = np.asarray(up, dtype=np.float64)
        fwd = target - center
        norm = np.linalg.norm(fwd)
        if norm == 0.0:
            raise CameraError("look_at target coincides with camera center")
        fwd = fwd / norm
        right = np.cross(fwd, up)
        rn = np.linalg.norm(right)
        if rn < 1e-12:
            raise CameraError("look_at forward direction is parallel to up")
        right = right / rn
        down = np.cross(fwd, right)  # y points down in view space
        rot = np.stack([right, down, fwd])
        view = np.eye(4)
        view[:3, :3] = rot
        view[:3, 3] = -rot @ center
        fy = (height / 2.0) / math.tan(math.radians(fov_y_deg) / 2.0)
        intr = np.array([
            [fy, 0.0, (width - 1) / 2.0],
            [0.0, fy, (height - 1) / 2.0],
            [0.0, 0.0, 1.0],
        ])
        proj = projection_from_intrinsics(intr, width, height, near, far)
        return cls(view, proj, rot, center, intr, near, far, width, height).validate()


def projection_from_intrinsics(intrinsics: np.ndarray, width: int, height: int,
                               near: float, far: float) -> np.ndarray:
    """Perspective matrix consistent with K: clip w = view z, clip z in [0, w].

    K follows the pixel-center convention (integer indices address pixel
    centers, so a centered principal point is (W-1)/2); the NDC-to-pixel
    floor mapping works in edge coordinates, hence the half-pixel shift.
    """
    k = np.asarray(intrinsics, dtype=np.float64)
    fx, fy = k[0, 0], k[1, 1]
    sk = k[0, 1]
    cx, cy = k[0, 2], k[1, 2]
    p = np.zeros((4, 4))
    p[0, 0] = 2.0 * fx / width
    p[0, 1] = 2.0 * sk / width
    p[0, 2] = 2.0 * (cx + 0.5) / width - 1.0
    p[1, 1] = 2.0 * fy / height
    p[1, 2] = 2.0 * (cy + 0.5) / height - 1.0
    p[2, 2] = far / (far - near)
    p[2, 3] = -far * near / (far - near)
    p[3, 2] = 1.0
    return p


def normalize_convention(view: np.ndarray, proj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Convert OpenGL-style matrices (y up, -z forward, clip z in [-1,1]).

    Detection: a GL projection has proj[3, 2] < 0 (w = -z_view). The fix is
    a 180-degree rotation about x applied between view and projection, plus
    the [-1,1] -> [0,1] depth remap. Already-conforming matrices pass
    through untouched.
    """
    view = np.asarray(view, dtype=np.float64).reshape(4, 4)
    proj = np.asarray(proj, dtype=np.float64).reshape(4, 4)
    if proj[3, 2] >= 0.0:
        return view, proj
    flip = np.diag([1.0, -1.0, -1.0, 1.0])
    view2 = flip @ view
    proj2 = proj @ flip
    proj2 = proj2.copy()
    proj2[2, :] = (proj2[2, :] + proj2[3, :]) * 0.5
    return view2, proj2


@dataclass(frozen=True)
class NdcPoint:
    """Projection result: NDC coordinates plus the raw clip w and view depth.

    ``valid`` is False whenever the clip w is at or behind the near gate;
    the NDC fields are zeroed in that case and must not be used.
    """

    x_ndc: float
    y_ndc: float
    z_ndc: float
    w_clip: float
    d_view: float
    valid: bool


@dataclass(frozen=True)
class PixelCoord:
    x_pix: int
    y_pix: int
    in_bounds: bool


def project(camera: Camera, p_world, tau_near: float = TAU_NEAR,
            eps: float = EPS_DIV) -> NdcPoint:
    """World point -> NDC via view then projection matrix.

    The division adds ``eps`` to w; points with w <= ``tau_near`` are
    flagged invalid rather than raised. The explicit row expansion below is
    the reference operation order shared with the culling kernels.
    """
    x, y, z = float(p_world[0]), float(p_world[1]), float(p_world[2])
    v = camera.view_matrix
    p = camera.proj_matrix
    vx = v[0, 0] * x + v[0, 1] * y + v[0, 2] * z + v[0, 3]
    vy = v[1, 0] * x + v[1, 1] * y + v[1, 2] * z + v[1, 3]
    vz = v[2, 0] * x + v[2, 1] * y + v[2, 2] * z + v[2, 3]
    vw = v[3, 0] * x + v[3, 1] * y + v[3, 2] * z + v[3, 3]
    xh = p[0, 0] * vx + p[0, 1] * vy + p[0, 2] * vz + p[0, 3] * vw
    yh = p[1, 0] * vx + p[1, 1] * vy + p[1, 2] * vz + p[1, 3] * vw
    zh = p[2, 0] * vx + p[2, 1] * vy + p[2, 2] * vz + p[2, 3] * vw
    wh = p[3, 0] * vx + p[3, 1] * vy + p[3, 2] * vz + p[3, 3] * vw
    if wh <= tau_near:
        return NdcPoint(0.0, 0.0, 0.0, wh, vz, False)
    denom = wh + eps
    return NdcPoint(xh / denom, yh / denom, zh / denom, wh, vz, True)


def ndc_to_pixel(ndc: NdcPoint, width: int, height: int) -> PixelCoord:
    """Floor-map NDC x/y to discrete pixel indices; flags out-of-bounds."""
    xp = math.floor((ndc.x_ndc + 1.0) * 0.5 * width)
    yp = math.floor((ndc.y_ndc + 1.0) * 0.5 * height)
    in_bounds = 0 <= xp < width and 0 <= yp < height
    return PixelCoord(int(xp), int(yp), in_bounds)


def linearize_depth(z_hw: float, near: float, far: float) -> float:
    """Hardware depth in [0,1] -> linear view-space depth in [near, far]."""
    denom = far - z_hw * (far - near)
    if denom <= 0.0:
        raise ValueError(
            f"linearize_depth denominator {denom} <= 0 (z_hw={z_hw}, near={near}, far={far})"
        )
    return near * far / denom


def back_project(camera: Camera, u: int, v: int, depth_linear: float) -> np.ndarray:
    """Pixel (u, v) at linear depth -> world point o + R^T (d * K^-1 [u,v,1])."""
    if depth_linear <= 0.0:
        raise ValueError(f"depth_linear must be > 0, got {depth_linear}")
    k = camera.intrinsics
    if abs(np.linalg.det(k)) < 1e-12:
        raise ValueError("intrinsics matrix is singular")
    ray = np.linalg.solve(k, np.array([float(u), float(v), 1.0]))
    return camera.center + camera.rotation.T @ (depth_linear * ray)
