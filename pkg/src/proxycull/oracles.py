"""Independent brute-force references for every fast path.

Everything here deliberately avoids the production code paths: the anchor
reference is a scalar Python loop, the rasterizer reference casts a ray
per pixel, the pyramid reference scans level-0 footprints directly, the
QEM reference is a dense grid search, and the back-projection reference
solves the 3x3 system by Cramer's rule. Documented limits: the ray-cast
reference is intended for <= 1000 triangles at <= 128x128.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import Camera, EPS_DIV, TAU_NEAR
from .hiz import HiZPyramid
from .mesh import TriangleMesh
from .raster import DepthMap

RAYCAST_MAX_TRIS = 1000
RAYCAST_MAX_DIM = 128


# -- scalar anchor-filter reference -------------------------------------------

def reference_cull_anchors(positions: np.ndarray, camera: Camera, depth: DepthMap,
                           gamma: float, tau_near: float = TAU_NEAR,
                           eps: float = EPS_DIV) -> np.ndarray:
    """Per-anchor verdicts from a plain Python loop over scalar arithmetic."""
    v = camera.view_matrix
    p = camera.proj_matrix
    v00, v01, v02, v03 = (float(x) for x in v[0])
    v10, v11, v12, v13 = (float(x) for x in v[1])
    v20, v21, v22, v23 = (float(x) for x in v[2])
    v30, v31, v32, v33 = (float(x) for x in v[3])
    p00, p01, p02, p03 = (float(x) for x in p[0])
    p10, p11, p12, p13 = (float(x) for x in p[1])
    p30, p31, p32, p33 = (float(x) for x in p[3])
    width = camera.width
    height = camera.height
    near = float(depth.near)
    far = float(depth.far)
    grid = depth.values
    out = np.empty(len(positions), dtype=np.uint8)
    for i, (x, y, z) in enumerate(positions.tolist()):
        vx = v00 * x + v01 * y + v02 * z + v03
        vy = v10 * x + v11 * y + v12 * z + v13
        vz = v20 * x + v21 * y + v22 * z + v23
        vw = v30 * x + v31 * y + v32 * z + v33
        xh = p00 * vx + p01 * vy + p02 * vz + p03 * vw
        yh = p10 * vx + p11 * vy + p12 * vz + p13 * vw
        wh = p30 * vx + p31 * vy + p32 * vz + p33 * vw
        if wh <= tau_near:
            out[i] = 1
            continue
        denom = wh + eps
        px = math.floor((xh / denom + 1.0) * 0.5 * width)
        py = math.floor((yh / denom + 1.0) * 0.5 * height)
        if px < 0 or px >= width or py < 0 or py >= height:
            out[i] = 2
            continue
        z_hw = grid[py, px]
        if z_hw == 1.0:
            out[i] = 0
            continue
        zf = float(z_hw)
        d_hat = near * far / (far - zf * (far - near)) + gamma
        out[i] = 3 if vz > d_hat else 0
    return out


# -- per-pixel ray-cast rasterization reference --------------------------------

def raycast_depth(mesh: TriangleMesh, camera: Camera,
                  face_indices: np.ndarray | None = None,
                  tau_near: float = TAU_NEAR) -> DepthMap:
    """Depth map built by intersecting each pixel-center ray with every
    triangle (Moller-Trumbore) and keeping the nearest hit."""
    faces = mesh.faces if face_indices is None else mesh.faces[np.asarray(face_indices, dtype=np.int64)]
    tri = mesh.vertices[faces]
    width, height = camera.width, camera.height
    out = np.full((height, width), 1.0, dtype=np.float32)
    if len(tri) == 0:
        return DepthMap(out, camera.near, camera.far)

    v0 = tri[:, 0]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    origin = camera.center
    rot = camera.rotation
    pm = camera.proj_matrix
    pv = camera.pv

    xs = (2.0 * (np.arange(width) + 0.5)) / width - 1.0
    for row in range(height):
        yn = (2.0 * (row + 0.5)) / height - 1.0
        # view-space direction with unit forward component
        dir_y = (yn - pm[1, 2]) / pm[1, 1]
        dir_x = (xs - pm[0, 1] * dir_y - pm[0, 2]) / pm[0, 0]
        dirs_view = np.stack([dir_x, np.full(width, dir_y), np.ones(width)], axis=1)
        dirs = dirs_view @ rot  # R^T per column vector == @R for row vectors

        pvec = np.cross(dirs[:, None, :], e2[None, :, :])
        det = np.einsum("tj,ptj->pt", e1, pvec)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            tvec = origin - v0
            u = np.einsum("tj,ptj->pt", tvec, pvec) * inv
            qvec = np.cross(tvec, e1)
            vbar = np.einsum("pj,tj->pt", dirs, qvec) * inv
            t_hit = np.einsum("tj,tj->t", e2, qvec)[None, :] * inv
        ok = ((det != 0.0) & (u >= 0.0) & (vbar >= 0.0) & (u + vbar <= 1.0)
              & (t_hit >= tau_near) & np.isfinite(t_hit))
        t_best = np.where(ok, t_hit, np.inf).min(axis=1)
        hit = np.isfinite(t_best)
        if not hit.any():
            continue
        pts = origin + t_best[hit, None] * dirs[hit]
        hom = np.concatenate([pts, np.ones((len(pts), 1))], axis=1)
        clip = hom @ pv.T
        z_ndc = np.clip(clip[:, 2] / clip[:, 3], 0.0, 1.0)
        out[row, hit] = z_ndc.astype(np.float32)
    return DepthMap(out, camera.near, camera.far)


# -- Hi-Z footprint reference ---------------------------------------------------

def check_hiz_footprints(pyramid: HiZPyramid) -> tuple[bool, str | None]:
    """Every texel must equal the max over its level-0 footprint."""
    base = pyramid.levels[0]
    bh, bw = base.shape
    for level in range(1, len(pyramid.levels)):
        grid = pyramid.levels[level]
        scale = 1 << level
        h, w = grid.shape
        for v in range(h):
            y0 = v * scale
            y1 = min((v + 1) * scale, bh)
            for u in range(w):
                x0 = u * scale
                x1 = min((u + 1) * scale, bw)
                expect = base[y0:y1, x0:x1].max()
                if grid[v, u] != expect:
                    return False, (f"level {level} texel ({u},{v}) = {grid[v, u]} "
                                   f"but footprint max = {expect}")
    return True, None


# -- exhaustive point-to-mesh distance ------------------------------------------

def point_triangle_distances(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """(N, T) unsigned distances from points to closest points on triangles."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab = b - a
    ac = c - a
    p = points[:, None, :]
    ap = p - a[None, :, :]
    d1 = np.einsum("tj,ptj->pt", ab, ap)
    d2 = np.einsum("tj,ptj->pt", ac, ap)
    bp = p - b[None, :, :]
    d3 = np.einsum("tj,ptj->pt", ab, bp)
    d4 = np.einsum("tj,ptj->pt", ac, bp)
    cp = p - c[None, :, :]
    d5 = np.einsum("tj,ptj->pt", ab, cp)
    d6 = np.einsum("tj,ptj->pt", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    denom = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        vfl = np.where(denom != 0.0, vb / denom, 0.0)
        wfl = np.where(denom != 0.0, vc / denom, 0.0)
        v_ab = np.where(d1 - d3 != 0.0, d1 / (d1 - d3), 0.0)
        w_ac = np.where(d2 - d6 != 0.0, d2 / (d2 - d6), 0.0)
        t_bc = np.where((d4 - d3) + (d5 - d6) != 0.0,
                        (d4 - d3) / ((d4 - d3) + (d5 - d6)), 0.0)

    closest = (a[None, :, :] + vfl[..., None] * ab[None, :, :]
               + wfl[..., None] * ac[None, :, :])
    # edge/vertex regions override the interior solution
    on_bc = (b[None, :, :] + np.clip(t_bc, 0.0, 1.0)[..., None] * (c - b)[None, :, :])
    on_ac = a[None, :, :] + np.clip(w_ac, 0.0, 1.0)[..., None] * ac[None, :, :]
    on_ab = a[None, :, :] + np.clip(v_ab, 0.0, 1.0)[..., None] * ab[None, :, :]

    shape = closest.shape
    closest = np.where(((va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0))[..., None], on_bc, closest)
    closest = np.where(((vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0))[..., None], on_ac, closest)
    closest = np.where(((vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0))[..., None], on_ab, closest)
    closest = np.where(((d1 <= 0.0) & (d2 <= 0.0))[..., None], np.broadcast_to(a[None, :, :], shape), closest)
    closest = np.where(((d3 >= 0.0) & (d4 <= d3))[..., None], np.broadcast_to(b[None, :, :], shape), closest)
    closest = np.where(((d6 >= 0.0) & (d5 <= d6))[..., None], np.broadcast_to(c[None, :, :], shape), closest)
    return np.linalg.norm(p - closest, axis=2)


def point_mesh_distance(points: np.ndarray, mesh: TriangleMesh) -> np.ndarray:
    """(N,) distance from each point to the mesh surface, checked exhaustively."""
    tri = mesh.vertices[mesh.faces]
    return point_triangle_distances(np.asarray(points, dtype=np.float64), tri).min(axis=1)


# -- QEM grid-search reference -----------------------------------------------

def qem_grid_search(q_matrix: np.ndarray, lo, hi, steps: int = 33) -> tuple[np.ndarray, float]:
    """Dense argmin of the quadric form over an axis-aligned box."""
    axes = [np.linspace(lo[k], hi[k], steps) for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel(), np.ones(gx.size)], axis=1)
    errs = np.einsum("ij,jk,ik->i", pts, q_matrix, pts)
    k = int(np.argmin(errs))
    return pts[k, :3].copy(), float(errs[k])


# -- scalar back-projection reference ------------------------------------------

def _det3(m) -> float:
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))


def reference_back_project(camera: Camera, u: int, v: int, depth_linear: float) -> np.ndarray:
    """Cramer's-rule unprojection, independent of numpy.linalg."""
    k = camera.intrinsics.tolist()
    rhs = [float(u), float(v), 1.0]
    det = _det3(k)
    if det == 0.0:
        raise ValueError("intrinsics matrix is singular")
    cols = []
    for col in range(3):
        m = [list(row) for row in k]
        for r in range(3):
            m[r][col] = rhs[r]
        cols.append(_det3(m) / det)
    r = camera.rotation.tolist()
    wx = depth_linear * cols[0]
    wy = depth_linear * cols[1]
    wz = depth_linear * cols[2]
    o = camera.center.tolist()
    return np.array([
        o[0] + r[0][0] * wx + r[1][0] * wy + r[2][0] * wz,
        o[1] + r[0][1] * wx + r[1][1] * wy + r[2][1] * wz,
        o[2] + r[0][2] * wx + r[1][2] * wy + r[2][2] * wz,
    ])


# -- scalar densification references ---------------------------------------------

def reference_select_patches(values: np.ndarray, patch_size: int):
    """Python-loop patch means and the strict 3x-mean selection."""
    h, w = values.shape
    npx = -(-w // patch_size)
    npy = -(-h // patch_size)
    means = [[0.0] * npx for _ in range(npy)]
    for py in range(npy):
        for px in range(npx):
            total = 0.0
            count = 0
            for y in range(py * patch_size, min((py + 1) * patch_size, h)):
                for x in range(px * patch_size, min((px + 1) * patch_size, w)):
                    total += float(values[y, x])
                    count += 1
            means[py][px] = total / count
    frame_mean = sum(sum(row) for row in means) / (npx * npy)
    selected = [[means[py][px] > 3.0 * frame_mean for px in range(npx)]
                for py in range(npy)]
    return np.array(means), frame_mean, np.array(selected, dtype=bool)


# -- the suite ------------------------------------------------------------------

@dataclass
class OracleResult:
    name: str
    passed: bool
    checked: int
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "checked": self.checked, "detail": self.detail}


@dataclass
class OracleReport:
    results: list[OracleResult] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {"all_passed": self.all_passed,
                "results": [r.to_dict() for r in self.results]}

    def summary_lines(self) -> list[str]:
        lines = []
        for r in self.results:
            status = "PASS" if r.passed else "FAIL"
            tail = f" — {r.detail}" if r.detail else ""
            lines.append(f"{status} {r.name} ({r.checked} checks){tail}")
        return lines


def _scaled_camera(camera: Camera, max_dim: int) -> Camera:
    """Shrink the viewport (and intrinsics) so brute force stays tractable."""
    from .camera import projection_from_intrinsics
    scale = min(1.0, max_dim / max(camera.width, camera.height))
    if scale >= 1.0:
        return camera
    w = max(1, int(round(camera.width * scale)))
    h = max(1, int(round(camera.height * scale)))
    k = camera.intrinsics.copy()
    k[0, :] *= w / camera.width
    k[1, :] *= h / camera.height
    proj = projection_from_intrinsics(k, w, h, camera.near, camera.far)
    return Camera(camera.view_matrix, proj, camera.rotation, camera.center,
                  k, camera.near, camera.far, w, h)


def oracle_suite(bundle, camera_index: int = 0, depth_override: DepthMap | None = None,
                 seed: int = 0) -> OracleReport:
    """Run every brute-force reference against its fast path.

    ``depth_override`` feeds a caller-supplied depth map to the *fast*
    anchor path only (fault-injection hook); the scalar reference always
    uses the internally rendered depth.
    """
    from .hiz import build_hiz
    from .raster import rasterize_depth
    from .simplify import optimal_collapse, Quadric
    from .visibility import cull_anchors

    report = OracleReport()
    camera = bundle.cameras[camera_index]
    mesh = bundle.proxy_mesh

    # 1. rasterizer vs per-pixel ray cast (documented limits apply)
    small_cam = _scaled_camera(camera, RAYCAST_MAX_DIM)
    faces = np.arange(min(len(mesh.faces), RAYCAST_MAX_TRIS), dtype=np.int64)
    fast = rasterize_depth(mesh, small_cam, faces)
    slow = raycast_depth(mesh, small_cam, faces)
    cov_fast = fast.values < 1.0
    cov_slow = slow.values < 1.0
    cov_diff = int((cov_fast != cov_slow).sum())
    if cov_diff:
        ys, xs = np.nonzero(cov_fast != cov_slow)
        detail = f"coverage mismatch at pixel ({xs[0]}, {ys[0]})"
        report.results.append(OracleResult("raster_raycast", False, fast.values.size, detail))
    else:
        err = np.abs(fast.values[cov_fast].astype(np.float64)
                     - slow.values[cov_fast].astype(np.float64))
        worst = float(err.max()) if err.size else 0.0
        report.results.append(OracleResult(
            "raster_raycast", worst <= 1e-6, fast.values.size,
            f"max depth error {worst:.2e} over {int(cov_fast.sum())} covered px"))

    # 2. Hi-Z footprint maxima
    pyramid = build_hiz(fast)
    ok, detail = check_hiz_footprints(pyramid)
    checked = sum(lvl.size for lvl in pyramid.levels[1:])
    report.results.append(OracleResult("hiz_footprint", ok, checked, detail or ""))

    # 3. fused anchor filter vs scalar reference
    depth_full = rasterize_depth(mesh, camera, tile_size=bundle.config.tile_size)
    fast_depth = depth_override if depth_override is not None else depth_full
    gamma = bundle.config.gamma
    fast_mask = cull_anchors(bundle.anchors, camera, fast_depth, gamma,
                             bundle.config.tau_near, bundle.config.eps)
    ref = reference_cull_anchors(bundle.anchors.positions, camera, depth_full,
                                 gamma, bundle.config.tau_near, bundle.config.eps)
    mism = np.nonzero(fast_mask.verdicts != ref)[0]
    detail = "" if mism.size == 0 else (
        f"first mismatch at anchor {int(mism[0])}: "
        f"fast={int(fast_mask.verdicts[mism[0]])} ref={int(ref[mism[0]])}")
    report.results.append(OracleResult("anchor_cull", mism.size == 0,
                                       bundle.anchors.count, detail))

    # 4. back-projection vs Cramer's rule
    from .camera import back_project
    n_bp = 0
    bp_ok = True
    bp_detail = ""
    for u in np.linspace(0, camera.width - 1, 5).astype(int):
        for v in np.linspace(0, camera.height - 1, 5).astype(int):
            for d in (camera.near * 2.0, (camera.near + camera.far) / 2.0):
                a = back_project(camera, int(u), int(v), float(d))
                b = reference_back_project(camera, int(u), int(v), float(d))
                n_bp += 1
                scale = 1.0 + float(np.linalg.norm(b))
                if np.linalg.norm(a - b) > 1e-9 * scale:
                    bp_ok = False
                    bp_detail = f"pixel ({u},{v}) d={d}: |diff|={np.linalg.norm(a - b):.2e}"
    report.results.append(OracleResult("back_project", bp_ok, n_bp, bp_detail))

    # 5. QEM minimizer vs dense grid search
    rng = np.random.default_rng(seed)
    qem_ok = True
    qem_detail = ""
    n_qem = 0
    while n_qem < 10:
        q = np.zeros((4, 4))
        for _ in range(rng.integers(3, 7)):
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            x0 = rng.uniform(-0.5, 0.5, 3)
            plane = np.append(n, -float(n @ x0))
            q += np.outer(plane, plane)
        sv = np.linalg.svd(q[:3, :3], compute_uv=False)
        if sv[2] < 0.3 * sv[0]:
            # anisotropic valley: the grid argmin can legitimately sit
            # several cells from the true minimizer
            continue
        cand = optimal_collapse(Quadric(q), Quadric.zeros(),
                                rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
        if np.abs(cand.optimal_position).max() > 1.8:
            continue
        g_pos, g_cost = qem_grid_search(q, (-2.0, -2.0, -2.0), (2.0, 2.0, 2.0), steps=41)
        res = 4.0 / 40.0
        if cand.cost > g_cost + 1e-9:
            qem_ok = False
            qem_detail = f"analytic cost {cand.cost:.3e} above grid min {g_cost:.3e}"
        elif np.abs(cand.optimal_position - g_pos).max() > res:
            qem_ok = False
            qem_detail = "minimizer farther than one grid cell from grid argmin"
        n_qem += 1
    report.results.append(OracleResult("qem_minimizer", qem_ok, n_qem, qem_detail))
    return report
