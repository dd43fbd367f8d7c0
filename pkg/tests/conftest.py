"""Shared fixtures and scene builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from proxycull import Camera, TriangleMesh, make_box, make_grid, merge_meshes


def perspective_camera(width=64, height=64, fov=60.0, near=0.5, far=50.0,
                       eye=(0.0, 0.0, 0.0), target=(0.0, 1.0, 0.0)) -> Camera:
    return Camera.look_at(eye, target, fov, width, height, near, far)


def triangle_soup(rng: np.random.Generator, n_tris: int, spread=6.0,
                  depth_range=(3.0, 20.0), size=1.5) -> TriangleMesh:
    """Random triangles in front of a +y-looking camera at the origin."""
    centers = np.stack([
        rng.uniform(-spread, spread, n_tris),
        rng.uniform(depth_range[0], depth_range[1], n_tris),
        rng.uniform(-spread, spread, n_tris),
    ], axis=1)
    offsets = rng.uniform(-size, size, (n_tris, 2, 3))
    verts = np.concatenate([centers[:, None, :], centers[:, None, :] + offsets],
                           axis=1).reshape(-1, 3)
    return TriangleMesh(verts, np.arange(3 * n_tris, dtype=np.int32).reshape(-1, 3))


def box_world(rng: np.random.Generator, n_boxes: int, extent=40.0) -> TriangleMesh:
    """Ground plane plus random axis-aligned boxes."""
    half = extent / 2.0
    parts = [make_grid(5, 5, origin=(-half, -half, 0.0), size=(extent, extent))]
    for _ in range(n_boxes):
        x0 = rng.uniform(-half, half - 6.0)
        y0 = rng.uniform(2.0, half)
        w = rng.uniform(2.0, 6.0)
        d = rng.uniform(2.0, 6.0)
        h = rng.uniform(2.0, 12.0)
        parts.append(make_box((x0, y0, 0.0), (x0 + w, y0 + d, h)))
    return merge_meshes(parts)


def occluder_world(rng: np.random.Generator, n_back_boxes: int = 12) -> TriangleMesh:
    """Box world with large slabs near the camera so that whole clusters of
    background geometry land behind them (exercises Hi-Z cluster culling)."""
    parts = [make_grid(5, 5, origin=(-30.0, -30.0, 0.0), size=(60.0, 60.0))]
    for _ in range(3):
        x0 = rng.uniform(-18.0, 6.0)
        parts.append(make_box((x0, rng.uniform(-6.0, -2.0), 0.0),
                              (x0 + rng.uniform(8.0, 14.0), rng.uniform(-1.0, 1.0),
                               rng.uniform(8.0, 14.0))))
    for _ in range(n_back_boxes):
        x0 = rng.uniform(-25.0, 20.0)
        y0 = rng.uniform(4.0, 25.0)
        parts.append(make_box((x0, y0, 0.0),
                              (x0 + rng.uniform(2.0, 6.0), y0 + rng.uniform(2.0, 6.0),
                               rng.uniform(1.0, 8.0))))
    return merge_meshes(parts)


def subdivide(mesh: TriangleMesh, rounds: int) -> TriangleMesh:
    """Midpoint-subdivide every face ``rounds`` times (4x faces per round)."""
    for _ in range(rounds):
        verts = list(mesh.vertices)
        midpoint: dict[tuple[int, int], int] = {}

        def mid(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            if key not in midpoint:
                verts.append((mesh.vertices[i] + mesh.vertices[j]) / 2.0)
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        faces = []
        for a, b, c in mesh.faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        mesh = TriangleMesh(np.array(verts), np.array(faces, dtype=np.int32))
    return mesh


def street_proxy_100k(rng: np.random.Generator) -> TriangleMesh:
    """~100k-face street proxy: bumpy ground plus tessellated buildings."""
    parts = []
    ground = make_grid(100, 100, origin=(-60.0, -60.0, 0.0), size=(120.0, 120.0))
    gv = ground.vertices.copy()
    gv[:, 2] = rng.uniform(0.0, 0.6, len(gv))
    parts.append(TriangleMesh(gv, ground.faces))
    k = 0
    while sum(len(p.faces) for p in parts) < 98_000:
        side = 1.0 if k % 2 == 0 else -1.0
        row = (k // 2) % 2
        slot = (k // 4) % 12
        x0 = side * (6.0 + row * 16.0)
        bw = 8.0 + (k % 3)
        bh = 12.0 + (k % 5) * 4.0
        y0 = -58.0 + slot * 9.8
        box = make_box((min(x0, x0 + side * bw), y0, 0.0),
                       (max(x0, x0 + side * bw), y0 + 7.5, bh))
        parts.append(subdivide(box, 3))
        k += 1
    return merge_meshes(parts)


@pytest.fixture(scope="session")
def small_camera() -> Camera:
    return perspective_camera()
