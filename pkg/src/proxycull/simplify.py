"""Quadric-error-metric edge-collapse simplification.

Per-vertex quadrics accumulate the squared-distance forms of incident
face planes; boundary and sharp-feature edges add two heavily weighted
constraint planes whose intersection is the edge line, which pins those
edges in place without forbidding collapses along them. Collapses are
processed lowest-cost-first from a lazy priority queue (stale entries are
detected with per-vertex generation counters) and rejected when they
would break manifoldness, flip a surviving face, or create a degenerate
one.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass

import numpy as np

from .mesh import TriangleMesh

log = logging.getLogger(__name__)

DEFAULT_BOUNDARY_WEIGHT = 1e3
DEFAULT_FEATURE_ANGLE_DEG = 40.0

# A is "invertible" when its smallest singular value clears this fraction
# of the largest; scale-relative so near-planar regions fall back safely.
SV_RATIO = 1e-10


@dataclass(frozen=True)
class Quadric:
    """Symmetric 4x4 form; E(x) = [x,1]^T Q [x,1] >= 0 for plane sums."""

    matrix: np.ndarray

    @classmethod
    def from_plane(cls, plane: np.ndarray) -> "Quadric":
        p = np.asarray(plane, dtype=np.float64).reshape(4)
        return cls(np.outer(p, p))

    @classmethod
    def zeros(cls) -> "Quadric":
        return cls(np.zeros((4, 4)))

    def __add__(self, other: "Quadric") -> "Quadric":
        return Quadric(self.matrix + other.matrix)

    @property
    def a_block(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def b_vector(self) -> np.ndarray:
        return self.matrix[:3, 3]

    @property
    def c_scalar(self) -> float:
        return float(self.matrix[3, 3])

    def error(self, x) -> float:
        h = np.append(np.asarray(x, dtype=np.float64), 1.0)
        return float(h @ self.matrix @ h)


@dataclass
class CollapseCandidate:
    edge: tuple[int, int]
    optimal_position: np.ndarray
    cost: float


def _edge_constraint_planes(x_i, x_j, normal_sum) -> list[np.ndarray] | None:
    """Two planes intersecting in the edge line, or None if degenerate."""
    t = x_j - x_i
    tn = np.linalg.norm(t)
    nn = np.linalg.norm(normal_sum)
    if tn < 1e-15 or nn < 1e-15:
        return None
    t = t / tn
    n_hat = normal_sum / nn
    w = np.cross(t, n_hat)
    wn = np.linalg.norm(w)
    if wn < 1e-15:
        return None
    w = w / wn
    x0 = (x_i + x_j) * 0.5
    return [np.append(n_hat, -float(n_hat @ x0)),
            np.append(w, -float(w @ x0))]


def accumulate_vertex_quadrics(mesh: TriangleMesh, boundary_weight: float,
                               feature_angle_deg: float = DEFAULT_FEATURE_ANGLE_DEG) -> np.ndarray:
    """(V, 4, 4) quadric array; the array-level core of vertex_quadrics."""
    if mesh.boundary_flags is None or mesh.feature_edges is None:
        mesh.analyze(feature_angle_deg)
    n_verts = len(mesh.vertices)
    quadrics = np.zeros((n_verts, 4, 4))
    if len(mesh.faces) == 0:
        return quadrics
    planes = mesh.face_planes()
    outer = planes[:, :, None] * planes[:, None, :]
    idx = mesh.faces.ravel().astype(np.int64)
    np.add.at(quadrics, idx, np.repeat(outer, 3, axis=0))

    edge_faces = mesh.edge_face_map()
    normals = mesh.face_normals()
    constrained = [e for e, fids in edge_faces.items() if len(fids) == 1]
    constrained += sorted(mesh.feature_edges)
    for i, j in sorted(set(constrained)):
        fids = edge_faces[(i, j)]
        planes2 = _edge_constraint_planes(mesh.vertices[i], mesh.vertices[j],
                                          normals[fids].sum(axis=0))
        if planes2 is None:
            continue
        add = sum(np.outer(p, p) for p in planes2) * boundary_weight
        quadrics[i] += add
        quadrics[j] += add
    return quadrics


def vertex_quadrics(mesh: TriangleMesh, boundary_weight: float,
                    feature_angle_deg: float = DEFAULT_FEATURE_ANGLE_DEG) -> list[Quadric]:
    """Per-vertex quadrics with boundary/feature constraint augmentation."""
    return [Quadric(m) for m in accumulate_vertex_quadrics(mesh, boundary_weight, feature_angle_deg)]


def _solve_collapse(q_sum: np.ndarray, x_i: np.ndarray, x_j: np.ndarray) -> tuple[np.ndarray, float]:
    a = q_sum[:3, :3]
    b = q_sum[:3, 3]
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] > 0.0 and sv[2] > SV_RATIO * sv[0]:
        x = np.linalg.solve(a, -b)
        return x, _error(q_sum, x)
    # singular fallback: midpoint preferred, then the endpoints
    best_x = (x_i + x_j) * 0.5
    best_e = _error(q_sum, best_x)
    for cand in (x_i, x_j):
        e = _error(q_sum, cand)
        if e < best_e:
            best_e = e
            best_x = cand
    return np.asarray(best_x, dtype=np.float64), best_e


def _error(q: np.ndarray, x: np.ndarray) -> float:
    h = np.append(x, 1.0)
    return float(h @ q @ h)


def optimal_collapse(q_i: Quadric, q_j: Quadric, x_i, x_j,
                     edge: tuple[int, int] = (-1, -1)) -> CollapseCandidate:
    """Combined-quadric minimizer -A^-1 b, or the best of {mid, x_i, x_j}."""
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    pos, cost = _solve_collapse(q_i.matrix + q_j.matrix, x_i, x_j)
    return CollapseCandidate(edge, pos, max(cost, 0.0))


class SimplifyEngine:
    """Stepwise edge-collapse driver; exposes state for verification."""

    def __init__(self, mesh: TriangleMesh, boundary_weight: float = DEFAULT_BOUNDARY_WEIGHT,
                 feature_angle_deg: float = DEFAULT_FEATURE_ANGLE_DEG):
        mesh.validate()
        self.positions = mesh.vertices.copy()
        self.quadrics = accumulate_vertex_quadrics(mesh, boundary_weight, feature_angle_deg)
        self.faces: list[list[int]] = [list(map(int, f)) for f in mesh.faces]
        self.face_alive = [True] * len(self.faces)
        self.alive_face_count = len(self.faces)
        self.vertex_faces: dict[int, set[int]] = {i: set() for i in range(len(self.positions))}
        for fi, f in enumerate(self.faces):
            for v in f:
                self.vertex_faces[v].add(fi)
        self.generation = np.zeros(len(self.positions), dtype=np.int64)
        self._heap: list = []
        self._seq = 0
        for i, j in self.alive_edges():
            self._push(i, j)

    # -- queries -----------------------------------------------------------

    def alive_edges(self) -> list[tuple[int, int]]:
        edges = set()
        for fi, alive in enumerate(self.face_alive):
            if not alive:
                continue
            a, b, c = self.faces[fi]
            for u, v in ((a, b), (b, c), (c, a)):
                edges.add((u, v) if u < v else (v, u))
        return sorted(edges)

    def neighbors(self, v: int) -> set[int]:
        out = set()
        for fi in self.vertex_faces[v]:
            out.update(self.faces[fi])
        out.discard(v)
        return out

    def candidate_for(self, i: int, j: int) -> CollapseCandidate:
        pos, cost = _solve_collapse(self.quadrics[i] + self.quadrics[j],
                                    self.positions[i], self.positions[j])
        return CollapseCandidate((i, j), pos, max(cost, 0.0))

    def edge_faces(self, i: int, j: int) -> list[int]:
        return sorted(self.vertex_faces[i] & self.vertex_faces[j])

    def is_valid_collapse(self, i: int, j: int, new_pos: np.ndarray) -> bool:
        """Link condition plus orientation/degeneracy test at new_pos."""
        shared_faces = self.vertex_faces[i] & self.vertex_faces[j]
        if not 1 <= len(shared_faces) <= 2:
            return False
        opposite = set()
        for fi in shared_faces:
            opposite.update(v for v in self.faces[fi] if v not in (i, j))
        if self.neighbors(i) & self.neighbors(j) != opposite:
            return False
        for fi in (self.vertex_faces[i] | self.vertex_faces[j]) - shared_faces:
            a, b, c = self.faces[fi]
            p = [self.positions[v] for v in (a, b, c)]
            n_before = np.cross(p[1] - p[0], p[2] - p[0])
            q = [new_pos if v in (i, j) else self.positions[v] for v in (a, b, c)]
            n_after = np.cross(q[1] - q[0], q[2] - q[0])
            if float(n_before @ n_after) <= 0.0:
                return False
        return True

    # -- mutation ------------------------------------------------------------

    def _push(self, i: int, j: int) -> None:
        if i > j:
            i, j = j, i
        cand = self.candidate_for(i, j)
        self._seq += 1
        heapq.heappush(self._heap, (cand.cost, i, j, self._seq,
                                    int(self.generation[i]), int(self.generation[j]),
                                    cand.optimal_position))

    def step(self) -> tuple[tuple[int, int], float] | None:
        """Pop until one valid collapse is applied; None when exhausted."""
        while self._heap:
            cost, i, j, _seq, gen_i, gen_j, pos = heapq.heappop(self._heap)
            if gen_i != self.generation[i] or gen_j != self.generation[j]:
                continue
            if not self.vertex_faces[i] or not self.vertex_faces[j]:
                continue
            if not self.is_valid_collapse(i, j, pos):
                continue
            self._apply_collapse(i, j, pos)
            return (i, j), cost
        return None

    def _apply_collapse(self, i: int, j: int, pos: np.ndarray) -> None:
        q_sum = self.quadrics[i] + self.quadrics[j]
        self.positions[i] = pos
        self.quadrics[i] = q_sum
        dying = self.vertex_faces[i] & self.vertex_faces[j]
        for fi in sorted(self.vertex_faces[j]):
            if fi in dying:
                continue
            self.faces[fi] = [i if v == j else v for v in self.faces[fi]]
            self.vertex_faces[i].add(fi)
        for fi in dying:
            self.face_alive[fi] = False
            self.alive_face_count -= 1
            for v in self.faces[fi]:
                self.vertex_faces[v].discard(fi)
            if fi in self.vertex_faces[i]:
                self.vertex_faces[i].discard(fi)
        self.vertex_faces[j] = set()
        self.generation[i] += 1
        self.generation[j] += 1
        # refresh candidates whose cost or validity the move can affect:
        # every edge touching the merged vertex's one-ring
        region = self.neighbors(i) | {i}
        seen = set()
        for u in sorted(region):
            for v in sorted(self.neighbors(u)):
                key = (u, v) if u < v else (v, u)
                if key not in seen:
                    seen.add(key)
                    self._push(*key)

    def extract_mesh(self) -> TriangleMesh:
        alive = [self.faces[fi] for fi, ok in enumerate(self.face_alive) if ok]
        used = sorted({v for f in alive for v in f})
        remap = {old: new for new, old in enumerate(used)}
        verts = self.positions[used]
        faces = np.array([[remap[v] for v in f] for f in alive], dtype=np.int32)
        return TriangleMesh(verts, faces)


def simplify(mesh: TriangleMesh, target_faces: int,
             boundary_weight: float = DEFAULT_BOUNDARY_WEIGHT,
             feature_angle_deg: float = DEFAULT_FEATURE_ANGLE_DEG) -> TriangleMesh:
    """Collapse lowest-cost valid edges until face count <= target_faces.

    Logs and returns the best mesh achieved if no valid collapse remains
    before the target is reached.
    """
    if target_faces < 4:
        raise ValueError(f"target_faces must be >= 4, got {target_faces}")
    engine = SimplifyEngine(mesh, boundary_weight, feature_angle_deg)
    while engine.alive_face_count > target_faces:
        if engine.step() is None:
            log.warning("no further valid collapse: stopping at %d faces (target %d)",
                        engine.alive_face_count, target_faces)
            break
    return engine.extract_mesh()
