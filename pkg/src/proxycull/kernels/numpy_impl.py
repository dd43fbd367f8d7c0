"""Pure-NumPy kernel implementations.

Reference semantics for the jitted twins in ``numba_impl``: every
arithmetic expression here is written with the same shape and order, so
per-pixel / per-anchor results agree bit-for-bit. The depth merge is a
minimum and the pyramid reduce a maximum, so iteration order never shows
in the output.
"""

from __future__ import annotations

import numpy as np


def fill_depth(depth, vx, vy, dx, dy, tl, alpha, beta, delta,
               zmin32, ix0, ix1, iy0, iy1, tile_size=64):
    """Min-merge screen-space triangles into ``depth`` (float32, HxW).

    Triangle arrays come pre-built from the shared rasterizer setup:
    vertex screen coords ``vx/vy`` (F,3), edge deltas ``dx/dy`` (F,3),
    top-left tie flags ``tl`` (F,3 uint8), depth plane ``alpha,beta,delta``
    (F,), and inclusive pixel bounding boxes. ``tile_size`` is accepted for
    signature parity and ignored.
    """
    height, width = depth.shape
    for t in range(vx.shape[0]):
        x0, x1 = int(ix0[t]), int(ix1[t])
        y0, y1 = int(iy0[t]), int(iy1[t])
        if x1 < x0 or y1 < y0:
            continue
        px = np.arange(x0, x1 + 1, dtype=np.float64) + 0.5
        py = np.arange(y0, y1 + 1, dtype=np.float64) + 0.5
        pxg, pyg = np.meshgrid(px, py)
        acc = np.ones(pxg.shape, dtype=bool)
        for k in range(3):
            e = dx[t, k] * (pyg - vy[t, k]) - dy[t, k] * (pxg - vx[t, k])
            if tl[t, k]:
                acc &= e >= 0.0
            else:
                acc &= e > 0.0
        if not acc.any():
            continue
        z = alpha[t] * pxg + beta[t] * pyg + delta[t]
        np.clip(z, 0.0, 1.0, out=z)
        z32 = z.astype(np.float32)
        cand = np.where(acc, z32, np.float32(np.inf))
        region = depth[y0:y1 + 1, x0:x1 + 1]
        np.minimum(region, cand, out=region)


def cull_anchors_kernel(pos, view, proj, depth, near, far, gamma, tau_near, eps):
    """Fused anchor filter; returns uint8 verdict codes per anchor."""
    height, width = depth.shape
    fw = float(width)
    fh = float(height)
    x = pos[:, 0]
    y = pos[:, 1]
    z = pos[:, 2]
    vx = view[0, 0] * x + view[0, 1] * y + view[0, 2] * z + view[0, 3]
    vy = view[1, 0] * x + view[1, 1] * y + view[1, 2] * z + view[1, 3]
    vz = view[2, 0] * x + view[2, 1] * y + view[2, 2] * z + view[2, 3]
    vw = view[3, 0] * x + view[3, 1] * y + view[3, 2] * z + view[3, 3]
    xh = proj[0, 0] * vx + proj[0, 1] * vy + proj[0, 2] * vz + proj[0, 3] * vw
    yh = proj[1, 0] * vx + proj[1, 1] * vy + proj[1, 2] * vz + proj[1, 3] * vw
    wh = proj[3, 0] * vx + proj[3, 1] * vy + proj[3, 2] * vz + proj[3, 3] * vw

    out = np.empty(pos.shape[0], dtype=np.uint8)
    behind = wh <= tau_near
    out[behind] = 1

    front = ~behind
    denom = wh + eps
    with np.errstate(invalid="ignore", divide="ignore"):
        xn = xh / denom
        yn = yh / denom
    sx = (xn + 1.0) * 0.5 * fw
    sy = (yn + 1.0) * 0.5 * fh
    off = front & ~((sx >= 0.0) & (sx < fw) & (sy >= 0.0) & (sy < fh))
    out[off] = 2

    vis = front & ~off
    px = np.floor(np.where(vis, sx, 0.0)).astype(np.int64)
    py = np.floor(np.where(vis, sy, 0.0)).astype(np.int64)
    zhw = depth[py, px]
    background = vis & (zhw == np.float32(1.0))
    out[background] = 0

    tested = vis & ~background
    zf = zhw.astype(np.float64)
    dmesh = near * far / (far - zf * (far - near))
    dhat = dmesh + gamma
    occluded = tested & (vz > dhat)
    out[occluded] = 3
    out[tested & ~occluded] = 0
    return out


def hiz_reduce(src):
    """One pyramid step: 2x2 max with edge-clamped sources on odd dims."""
    h, w = src.shape
    ph = h + (h & 1)
    pw = w + (w & 1)
    p = np.pad(src, ((0, ph - h), (0, pw - w)), mode="edge")
    return np.ascontiguousarray(p.reshape(ph // 2, 2, pw // 2, 2).max(axis=(1, 3)))
