"""Numba-jitted kernel implementations.

Same contracts as ``numpy_impl``; the rasterizer additionally bins
triangles into screen tiles (exclusive pixel ownership per tile, so the
parallel schedule cannot affect the output), walks conservative row spans
derived from the edge lines, and skips work that provably cannot change
the buffer (front-to-back occlusion pretests). Every expression that
decides coverage or depth mirrors the NumPy twin operation-for-operation,
so both backends produce bit-identical buffers.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True)
def setup_screen_triangles(vertices, faces, view, proj, tau, width, height,
                           o_vx, o_vy, o_dx, o_dy, o_tl,
                           o_alpha, o_beta, o_delta, o_zmin32,
                           o_ix0, o_ix1, o_iy0, o_iy1):
    """Transform, clip (against w = tau), project and pack; returns count.

    Output arrays hold up to 2 * len(faces) rows. Expressions mirror the
    NumPy setup in raster.prepare_screen_triangles so both backends feed
    the fill kernels identical values.
    """
    n_verts = vertices.shape[0]
    cx = np.empty(n_verts, dtype=np.float64)
    cy = np.empty(n_verts, dtype=np.float64)
    cz = np.empty(n_verts, dtype=np.float64)
    cw = np.empty(n_verts, dtype=np.float64)
    for i in range(n_verts):
        x = vertices[i, 0]
        y = vertices[i, 1]
        z = vertices[i, 2]
        vx = view[0, 0] * x + view[0, 1] * y + view[0, 2] * z + view[0, 3]
        vy = view[1, 0] * x + view[1, 1] * y + view[1, 2] * z + view[1, 3]
        vz = view[2, 0] * x + view[2, 1] * y + view[2, 2] * z + view[2, 3]
        vw = view[3, 0] * x + view[3, 1] * y + view[3, 2] * z + view[3, 3]
        cx[i] = proj[0, 0] * vx + proj[0, 1] * vy + proj[0, 2] * vz + proj[0, 3] * vw
        cy[i] = proj[1, 0] * vx + proj[1, 1] * vy + proj[1, 2] * vz + proj[1, 3] * vw
        cz[i] = proj[2, 0] * vx + proj[2, 1] * vy + proj[2, 2] * vz + proj[2, 3] * vw
        cw[i] = proj[3, 0] * vx + proj[3, 1] * vy + proj[3, 2] * vz + proj[3, 3] * vw

    n = 0
    fw = np.float64(width)
    fh = np.float64(height)
    px = np.empty(7, dtype=np.float64)
    py = np.empty(7, dtype=np.float64)
    pz = np.empty(7, dtype=np.float64)
    pw = np.empty(7, dtype=np.float64)
    qx = np.empty(7, dtype=np.float64)
    qy = np.empty(7, dtype=np.float64)
    qz = np.empty(7, dtype=np.float64)
    qw = np.empty(7, dtype=np.float64)
    sx = np.empty(3, dtype=np.float64)
    sy = np.empty(3, dtype=np.float64)
    sz = np.empty(3, dtype=np.float64)
    for t in range(faces.shape[0]):
        for k in range(3):
            idx = faces[t, k]
            px[k] = cx[idx]
            py[k] = cy[idx]
            pz[k] = cz[idx]
            pw[k] = cw[idx]
        n_in = 0
        for k in range(3):
            if pw[k] > tau:
                n_in += 1
        if n_in == 0:
            continue
        if n_in == 3:
            m = 3
        else:
            # Sutherland-Hodgman against w = tau
            m = 0
            for k in range(3):
                k2 = k + 1 if k < 2 else 0
                ina = pw[k] > tau
                inb = pw[k2] > tau
                if ina:
                    qx[m] = px[k]; qy[m] = py[k]; qz[m] = pz[k]; qw[m] = pw[k]
                    m += 1
                if ina != inb:
                    tt = (tau - pw[k]) / (pw[k2] - pw[k])
                    qx[m] = px[k] + tt * (px[k2] - px[k])
                    qy[m] = py[k] + tt * (py[k2] - py[k])
                    qz[m] = pz[k] + tt * (pz[k2] - pz[k])
                    qw[m] = pw[k] + tt * (pw[k2] - pw[k])
                    m += 1
            if m < 3:
                continue
            for k in range(m):
                px[k] = qx[k]; py[k] = qy[k]; pz[k] = qz[k]; pw[k] = qw[k]
        for fan in range(1, m - 1):
            sx[0] = (px[0] / pw[0] + 1.0) * 0.5 * fw
            sy[0] = (py[0] / pw[0] + 1.0) * 0.5 * fh
            sz[0] = pz[0] / pw[0]
            sx[1] = (px[fan] / pw[fan] + 1.0) * 0.5 * fw
            sy[1] = (py[fan] / pw[fan] + 1.0) * 0.5 * fh
            sz[1] = pz[fan] / pw[fan]
            sx[2] = (px[fan + 1] / pw[fan + 1] + 1.0) * 0.5 * fw
            sy[2] = (py[fan + 1] / pw[fan + 1] + 1.0) * 0.5 * fh
            sz[2] = pz[fan + 1] / pw[fan + 1]
            area2 = ((sx[1] - sx[0]) * (sy[2] - sy[0])
                     - (sy[1] - sy[0]) * (sx[2] - sx[0]))
            if area2 < 0.0:
                tmp = sx[1]; sx[1] = sx[2]; sx[2] = tmp
                tmp = sy[1]; sy[1] = sy[2]; sy[2] = tmp
                tmp = sz[1]; sz[1] = sz[2]; sz[2] = tmp
                area2 = -area2
            if area2 == 0.0:
                continue
            minx = min(sx[0], min(sx[1], sx[2]))
            maxx = max(sx[0], max(sx[1], sx[2]))
            miny = min(sy[0], min(sy[1], sy[2]))
            maxy = max(sy[0], max(sy[1], sy[2]))
            bx0 = max(np.floor(minx - 0.5), 0.0)
            bx1 = min(np.ceil(maxx - 0.5), fw - 1.0)
            by0 = max(np.floor(miny - 0.5), 0.0)
            by1 = min(np.ceil(maxy - 0.5), fh - 1.0)
            if bx0 > bx1 or by0 > by1:
                continue
            x10 = sx[1] - sx[0]
            x20 = sx[2] - sx[0]
            y10 = sy[1] - sy[0]
            y20 = sy[2] - sy[0]
            z10 = sz[1] - sz[0]
            z20 = sz[2] - sz[0]
            det = x10 * y20 - x20 * y10
            alpha = (z10 * y20 - z20 * y10) / det
            beta = (x10 * z20 - x20 * z10) / det
            delta = sz[0] - alpha * sx[0] - beta * sy[0]
            zmin = min(sz[0], min(sz[1], sz[2]))
            if zmin < 0.0:
                zmin = 0.0
            elif zmin > 1.0:
                zmin = 1.0
            for k in range(3):
                k2 = k + 1 if k < 2 else 0
                dxe = sx[k2] - sx[k]
                dye = sy[k2] - sy[k]
                # evaluate every edge from its canonical endpoint so the
                # two triangles sharing it compute exact IEEE negations
                # (watertight ties under the top-left rule)
                if (sy[k] < sy[k2]) or (sy[k] == sy[k2] and sx[k] <= sx[k2]):
                    o_vx[n, k] = sx[k]
                    o_vy[n, k] = sy[k]
                else:
                    o_vx[n, k] = sx[k2]
                    o_vy[n, k] = sy[k2]
                o_dx[n, k] = dxe
                o_dy[n, k] = dye
                o_tl[n, k] = 1 if (dye < 0.0 or (dye == 0.0 and dxe > 0.0)) else 0
            o_alpha[n] = alpha
            o_beta[n] = beta
            o_delta[n] = delta
            o_zmin32[n] = np.float32(zmin)
            o_ix0[n] = np.int64(bx0)
            o_ix1[n] = np.int64(bx1)
            o_iy0[n] = np.int64(by0)
            o_iy1[n] = np.int64(by1)
            n += 1
    return n


@njit(cache=True)
def _bin_triangles(ix0, ix1, iy0, iy1, order, tile, ntx, nty):
    """CSR tile lists; triangles appended in ``order`` (front-to-back)."""
    n_tris = order.shape[0]
    n_tiles = ntx * nty
    counts = np.zeros(n_tiles, dtype=np.int64)
    for s in range(n_tris):
        t = order[s]
        for ty in range(iy0[t] // tile, iy1[t] // tile + 1):
            for tx in range(ix0[t] // tile, ix1[t] // tile + 1):
                counts[ty * ntx + tx] += 1
    offsets = np.zeros(n_tiles + 1, dtype=np.int64)
    for i in range(n_tiles):
        offsets[i + 1] = offsets[i] + counts[i]
    items = np.empty(offsets[n_tiles], dtype=np.int64)
    cursor = offsets[:n_tiles].copy()
    for s in range(n_tris):
        t = order[s]
        for ty in range(iy0[t] // tile, iy1[t] // tile + 1):
            for tx in range(ix0[t] // tile, ix1[t] // tile + 1):
                tid = ty * ntx + tx
                items[cursor[tid]] = t
                cursor[tid] += 1
    return offsets, items


@njit(cache=True, parallel=True)
def _fill_tiles(depth, vx, vy, dx, dy, tl, alpha, beta, delta, zmin32,
                ix0, ix1, iy0, iy1, offsets, items, tile, ntx, nty):
    height, width = depth.shape
    for tid in prange(ntx * nty):
        ty = tid // ntx
        tx = tid % ntx
        x_lo = tx * tile
        y_lo = ty * tile
        x_hi = min(x_lo + tile, width) - 1
        y_hi = min(y_lo + tile, height) - 1
        n_pix = (x_hi - x_lo + 1) * (y_hi - y_lo + 1)
        covered = 0
        bound = np.float32(1.0)
        bound_final = False
        ebuf0 = np.empty(tile, dtype=np.float64)
        ebuf1 = np.empty(tile, dtype=np.float64)
        ebuf2 = np.empty(tile, dtype=np.float64)
        zbuf = np.empty(tile, dtype=np.float32)
        for k in range(offsets[tid], offsets[tid + 1]):
            t = items[k]
            # triangles arrive sorted by zmin: once one cannot lower any
            # pixel of a fully covered tile, none of the rest can either
            zm = zmin32[t]
            if zm >= bound:
                break
            bx0 = max(ix0[t], x_lo)
            bx1 = min(ix1[t], x_hi)
            by0 = max(iy0[t], y_lo)
            by1 = min(iy1[t], y_hi)
            dx0 = dx[t, 0]
            dy0 = dy[t, 0]
            dx1 = dx[t, 1]
            dy1 = dy[t, 1]
            dx2 = dx[t, 2]
            dy2 = dy[t, 2]
            x0v = vx[t, 0]
            y0v = vy[t, 0]
            x1v = vx[t, 1]
            y1v = vy[t, 1]
            x2v = vx[t, 2]
            y2v = vy[t, 2]
            tl0 = tl[t, 0]
            tl1 = tl[t, 1]
            tl2 = tl[t, 2]
            al = alpha[t]
            be = beta[t]
            de = delta[t]
            # conservative row spans from the edge lines: each edge's
            # zero-crossing x is linear in py, tracked incrementally with
            # > 1 px slack; the per-pixel test below stays the sole
            # (bit-exact) accept decider
            bx0f = np.float64(bx0)
            bx1f = np.float64(bx1)
            py0 = by0 + 0.5
            s0 = dx0 / dy0 if dy0 != 0.0 else 0.0
            s1 = dx1 / dy1 if dy1 != 0.0 else 0.0
            s2 = dx2 / dy2 if dy2 != 0.0 else 0.0
            b0 = x0v + s0 * (py0 - y0v)
            b1 = x1v + s1 * (py0 - y1v)
            b2 = x2v + s2 * (py0 - y2v)
            for iy in range(by0, by1 + 1):
                py = iy + 0.5
                lo_f = bx0f
                hi_f = bx1f
                row_dead = False
                c0 = dx0 * (py - y0v)
                c1 = dx1 * (py - y1v)
                c2 = dx2 * (py - y2v)
                if dy0 > 0.0:
                    if b0 < hi_f:
                        hi_f = b0
                elif dy0 < 0.0:
                    if b0 > lo_f:
                        lo_f = b0
                elif c0 < 0.0 or (c0 == 0.0 and tl0 == 0):
                    row_dead = True
                if dy1 > 0.0:
                    if b1 < hi_f:
                        hi_f = b1
                elif dy1 < 0.0:
                    if b1 > lo_f:
                        lo_f = b1
                elif c1 < 0.0 or (c1 == 0.0 and tl1 == 0):
                    row_dead = True
                if dy2 > 0.0:
                    if b2 < hi_f:
                        hi_f = b2
                elif dy2 < 0.0:
                    if b2 > lo_f:
                        lo_f = b2
                elif c2 < 0.0 or (c2 == 0.0 and tl2 == 0):
                    row_dead = True
                b0 += s0
                b1 += s1
                b2 += s2
                if row_dead:
                    continue
                lo_c = max(lo_f - 1.5, bx0f)
                hi_c = min(hi_f + 1.5, bx1f)
                if hi_c < lo_c:
                    continue
                lo = np.int64(lo_c)
                hi = np.int64(hi_c)
                m = hi - lo + 1
                cby = be * py
                # branchless (vectorizable) evaluation of the row span;
                # expression trees match the per-pixel reference exactly:
                # e = dx*(py - y0) - dy*(px - x0), z = al*px + be*py + de
                for j in range(m):
                    pxj = np.float64(lo + j) + 0.5
                    ebuf0[j] = c0 - dy0 * (pxj - x0v)
                    ebuf1[j] = c1 - dy1 * (pxj - x1v)
                    ebuf2[j] = c2 - dy2 * (pxj - x2v)
                    z = (al * pxj + cby) + de
                    zbuf[j] = np.float32(min(max(z, 0.0), 1.0))
                for j in range(m):
                    z32 = zbuf[j]
                    old = depth[iy, lo + j]
                    if z32 >= old:
                        continue
                    e0 = ebuf0[j]
                    if e0 < 0.0 or (e0 == 0.0 and tl0 == 0):
                        continue
                    e1 = ebuf1[j]
                    if e1 < 0.0 or (e1 == 0.0 and tl1 == 0):
                        continue
                    e2 = ebuf2[j]
                    if e2 < 0.0 or (e2 == 0.0 and tl2 == 0):
                        continue
                    if old == np.float32(1.0):
                        covered += 1
                    depth[iy, lo + j] = z32
            if covered >= n_pix and not bound_final:
                mx = np.float32(0.0)
                for iy in range(y_lo, y_hi + 1):
                    for ix in range(x_lo, x_hi + 1):
                        if depth[iy, ix] > mx:
                            mx = depth[iy, ix]
                bound = mx
                bound_final = True


def fill_depth(depth, vx, vy, dx, dy, tl, alpha, beta, delta,
               zmin32, ix0, ix1, iy0, iy1, tile_size=64):
    """Tile-parallel min-merge of screen triangles into ``depth``."""
    if vx.shape[0] == 0:
        return
    height, width = depth.shape
    ntx = (width + tile_size - 1) // tile_size
    nty = (height + tile_size - 1) // tile_size
    # front-to-back within each tile makes the occlusion pretests effective
    order = np.argsort(zmin32, kind="stable").astype(np.int64)
    offsets, items = _bin_triangles(ix0, ix1, iy0, iy1, order, tile_size, ntx, nty)
    _fill_tiles(depth, vx, vy, dx, dy, tl, alpha, beta, delta, zmin32,
                ix0, ix1, iy0, iy1, offsets, items, tile_size, ntx, nty)


@njit(cache=True, parallel=True)
def _cull_anchors(pos, view, proj, depth, near, far, gamma, tau_near, eps):
    n_anchors = pos.shape[0]
    out = np.empty(n_anchors, dtype=np.uint8)
    height, width = depth.shape
    fw = np.float64(width)
    fh = np.float64(height)
    for i in prange(n_anchors):
        x = pos[i, 0]
        y = pos[i, 1]
        z = pos[i, 2]
        vx = view[0, 0] * x + view[0, 1] * y + view[0, 2] * z + view[0, 3]
        vy = view[1, 0] * x + view[1, 1] * y + view[1, 2] * z + view[1, 3]
        vz = view[2, 0] * x + view[2, 1] * y + view[2, 2] * z + view[2, 3]
        vw = view[3, 0] * x + view[3, 1] * y + view[3, 2] * z + view[3, 3]
        xh = proj[0, 0] * vx + proj[0, 1] * vy + proj[0, 2] * vz + proj[0, 3] * vw
        yh = proj[1, 0] * vx + proj[1, 1] * vy + proj[1, 2] * vz + proj[1, 3] * vw
        wh = proj[3, 0] * vx + proj[3, 1] * vy + proj[3, 2] * vz + proj[3, 3] * vw
        if wh <= tau_near:
            out[i] = 1
            continue
        denom = wh + eps
        xn = xh / denom
        yn = yh / denom
        sx = (xn + 1.0) * 0.5 * fw
        sy = (yn + 1.0) * 0.5 * fh
        if sx < 0.0 or sx >= fw or sy < 0.0 or sy >= fh:
            out[i] = 2
            continue
        px = np.int64(sx)
        py = np.int64(sy)
        zhw = depth[py, px]
        if zhw == np.float32(1.0):
            out[i] = 0
            continue
        zf = np.float64(zhw)
        dmesh = near * far / (far - zf * (far - near))
        dhat = dmesh + gamma
        if vz > dhat:
            out[i] = 3
        else:
            out[i] = 0
    return out


def cull_anchors_kernel(pos, view, proj, depth, near, far, gamma, tau_near, eps):
    """Fused anchor filter; returns uint8 verdict codes per anchor."""
    return _cull_anchors(pos, view, proj, depth,
                         float(near), float(far), float(gamma),
                         float(tau_near), float(eps))


@njit(cache=True, parallel=True)
def _hiz_reduce(src):
    h, w = src.shape
    oh = (h + 1) // 2
    ow = (w + 1) // 2
    dst = np.empty((oh, ow), dtype=np.float32)
    for v in prange(oh):
        y0 = 2 * v
        y1 = min(2 * v + 1, h - 1)
        for u in range(ow):
            x0 = 2 * u
            x1 = min(2 * u + 1, w - 1)
            m = src[y0, x0]
            if src[y0, x1] > m:
                m = src[y0, x1]
            if src[y1, x0] > m:
                m = src[y1, x0]
            if src[y1, x1] > m:
                m = src[y1, x1]
            dst[v, u] = m
    return dst


def hiz_reduce(src):
    """One pyramid step: 2x2 max with edge-clamped sources on odd dims."""
    return _hiz_reduce(src)
