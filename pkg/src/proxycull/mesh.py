"""Triangle mesh container, analysis helpers and procedural generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Raised when mesh data violates its invariants."""


@dataclass
class TriangleMesh:
    """Indexed triangle mesh.

    ``boundary_flags`` (per-vertex, on an open boundary) and
    ``feature_edges`` (vertex-index pairs whose dihedral angle exceeds a
    threshold) are filled by :meth:`analyze`; both stay None until then.
    """

    vertices: np.ndarray
    faces: np.ndarray
    boundary_flags: np.ndarray | None = None
    feature_edges: set[tuple[int, int]] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        self.faces = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int32).reshape(-1, 3))

    # -- validation --------------------------------------------------------

    def invariant_violations(self) -> list[str]:
        errs = []
        if not np.all(np.isfinite(self.vertices)):
            errs.append("vertices contain non-finite coordinates")
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                errs.append(
                    f"face index out of range [0, {len(self.vertices)}) "
                    f"(min={self.faces.min()}, max={self.faces.max()})"
                )
            else:
                a, b, c = self.faces[:, 0], self.faces[:, 1], self.faces[:, 2]
                degen = (a == b) | (b == c) | (a == c)
                if degen.any():
                    errs.append(f"{int(degen.sum())} degenerate faces (repeated vertex index)")
        return errs

    def validate(self) -> "TriangleMesh":
        errs = self.invariant_violations()
        if errs:
            raise MeshError("; ".join(errs))
        return self

    # -- geometry ------------------------------------------------------------

    def face_normals(self, normalized: bool = True) -> np.ndarray:
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        if normalized:
            ln = np.linalg.norm(n, axis=1, keepdims=True)
            ln[ln == 0.0] = 1.0
            n = n / ln
        return n

    def face_planes(self) -> np.ndarray:
        """Per-face plane (a, b, c, d) with unit normal and a*x+b*y+c*z+d = 0."""
        n = self.face_normals(normalized=True)
        d = -np.einsum("ij,ij->i", n, self.vertices[self.faces[:, 0]])
        return np.concatenate([n, d[:, None]], axis=1)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.faces)] if self.faces.size else self.vertices
        return used.min(axis=0), used.max(axis=0)

    def edge_face_map(self) -> dict[tuple[int, int], list[int]]:
        """Undirected edge (i<j) -> incident face indices."""
        out: dict[tuple[int, int], list[int]] = {}
        for fi, (a, b, c) in enumerate(self.faces):
            for i, j in ((a, b), (b, c), (c, a)):
                key = (int(i), int(j)) if i < j else (int(j), int(i))
                out.setdefault(key, []).append(fi)
        return out

    def analyze(self, feature_angle_deg: float = 40.0) -> "TriangleMesh":
        """Populate boundary_flags and feature_edges."""
        edge_faces = self.edge_face_map()
        flags = np.zeros(len(self.vertices), dtype=bool)
        features: set[tuple[int, int]] = set()
        normals = self.face_normals()
        cos_thresh = math.cos(math.radians(feature_angle_deg))
        for (i, j), fids in edge_faces.items():
            if len(fids) == 1:
                flags[i] = True
                flags[j] = True
            elif len(fids) == 2:
                c = float(np.dot(normals[fids[0]], normals[fids[1]]))
                if c < cos_thresh:
                    features.add((i, j))
        self.boundary_flags = flags
        self.feature_edges = features
        return self

    def is_manifold_closed(self) -> bool:
        """Every edge shared by exactly two faces, once per direction."""
        directed: set[tuple[int, int]] = set()
        for a, b, c in self.faces:
            for i, j in ((a, b), (b, c), (c, a)):
                key = (int(i), int(j))
                if key in directed:
                    return False
                directed.add(key)
        return all((j, i) in directed for (i, j) in directed)

    def euler_characteristic(self) -> int:
        nv = len(np.unique(self.faces))
        ne = len(self.edge_face_map())
        return nv - ne + len(self.faces)


# -- generators --------------------------------------------------------------


def make_box(bmin, bmax) -> TriangleMesh:
    """Axis-aligned box with outward-facing triangles."""
    x0, y0, z0 = bmin
    x1, y1, z1 = bmax
    v = np.array([
        [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
        [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
    ], dtype=np.float64)
    quads = [
        (0, 3, 2, 1),  # bottom (-z)
        (4, 5, 6, 7),  # top (+z)
        (0, 1, 5, 4),  # -y
        (2, 3, 7, 6),  # +y
        (0, 4, 7, 3),  # -x
        (1, 2, 6, 5),  # +x
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return TriangleMesh(v, np.array(faces, dtype=np.int32))


def make_grid(nx: int, ny: int, origin=(0.0, 0.0, 0.0), size=(1.0, 1.0)) -> TriangleMesh:
    """Flat z-constant grid with nx*ny vertices and 2*(nx-1)*(ny-1) faces."""
    ox, oy, oz = origin
    sx, sy = size
    xs = ox + np.linspace(0.0, sx, nx)
    ys = oy + np.linspace(0.0, sy, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    verts = np.stack([gx.ravel(), gy.ravel(), np.full(nx * ny, oz)], axis=1)
    faces = []
    for r in range(ny - 1):
        for c in range(nx - 1):
            i0 = r * nx + c
            i1 = i0 + 1
            i2 = i0 + nx
            i3 = i2 + 1
            faces.append((i0, i1, i3))
            faces.append((i0, i3, i2))
    return TriangleMesh(verts, np.array(faces, dtype=np.int32))


def make_icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Subdivided icosahedron; 20 * 4**subdivisions faces."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            idx = midpoint.get(key)
            if idx is None:
                m = verts[i] + verts[j]
                m = m / np.linalg.norm(m)
                verts.append(m)
                idx = len(verts) - 1
                midpoint[key] = idx
            return idx

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh(v, np.array(faces, dtype=np.int32))


def merge_meshes(meshes: list[TriangleMesh]) -> TriangleMesh:
    """Concatenate meshes, offsetting face indices."""
    verts = []
    faces = []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += len(m.vertices)
    return TriangleMesh(np.concatenate(verts), np.concatenate(faces))
