"""Quadric accumulation, optimal collapse and the full simplification loop."""

from __future__ import annotations

import numpy as np
import pytest

from proxycull import (Quadric, SimplifyEngine, TriangleMesh, make_grid,
                       make_icosphere, optimal_collapse, simplify,
                       vertex_quadrics)
from proxycull.oracles import point_mesh_distance, qem_grid_search


def plane_quadric(normal, point) -> Quadric:
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    return Quadric.from_plane(np.append(n, -float(n @ np.asarray(point))))


class TestVertexQuadrics:
    def test_single_triangle_zero_on_plane(self):
        mesh = TriangleMesh(
            np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
            np.array([[0, 1, 2]], dtype=np.int32))
        # without boundary constraints the quadric is the bare plane form
        quads = vertex_quadrics(mesh, boundary_weight=0.0)
        for q in quads:
            assert q.error([0.3, -0.2, 0.0]) == pytest.approx(0.0, abs=1e-12)
            assert q.error([0.3, -0.2, 0.7]) == pytest.approx(0.49, abs=1e-9)

    def test_three_orthogonal_planes_identity_block(self):
        q = (plane_quadric([1, 0, 0], [0, 0, 0])
             + plane_quadric([0, 1, 0], [0, 0, 0])
             + plane_quadric([0, 0, 1], [0, 0, 0]))
        np.testing.assert_allclose(q.a_block, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(q.b_vector, np.zeros(3), atol=1e-15)
        assert q.c_scalar == pytest.approx(0.0)

    def test_boundary_constraint_penalizes_off_edge_points(self):
        """Edge along x at z=0 with weight 1e3: displacing 0.1 off the line
        costs at least 1e3 * 0.01."""
        mesh = TriangleMesh(
            np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 1.0, 0.0]]),
            np.array([[0, 1, 2]], dtype=np.int32))
        quads = vertex_quadrics(mesh, boundary_weight=1e3)
        # scalar oracle: constraint planes for the x-axis edge are z=0 and y=0
        expected = (plane_quadric([0, 0, 1], [0.5, 0, 0]).matrix * 1e3
                    + plane_quadric([0, -1, 0], [0.5, 0, 0]).matrix * 1e3)
        probe = np.array([0.2, 0.1, 0.0])  # 0.1 off the edge line, on the face
        h = np.append(probe, 1.0)
        scalar_error = float(h @ expected @ h)
        assert scalar_error == pytest.approx(1e3 * 0.01, rel=1e-9)
        assert quads[0].error(probe) >= 1e3 * 0.01 - 1e-6

    def test_quadric_error_nonnegative_and_zero_only_on_planes(self):
        """E >= 0 always; E == 0 exactly when the point sits on every
        contributing plane (planes built through a shared point)."""
        rng = np.random.default_rng(3)
        for _ in range(50):
            common = rng.uniform(-1, 1, 3)
            normals = []
            q = Quadric.zeros()
            for _ in range(rng.integers(1, 6)):
                n = rng.normal(size=3)
                n /= np.linalg.norm(n)
                normals.append(n)
                q = q + plane_quadric(n, common)
            assert q.error(common) == pytest.approx(0.0, abs=1e-9)
            x = rng.uniform(-2, 2, 3)
            err = q.error(x)
            assert err >= -1e-9
            true_err = sum(float(n @ (x - common)) ** 2 for n in normals)
            assert err == pytest.approx(true_err, abs=1e-9)
            off_plane = max(abs(float(n @ (x - common))) for n in normals)
            if off_plane > 1e-3:
                assert err > 1e-7


class TestOptimalCollapse:
    def test_orthogonal_planes_intersect_at_origin(self):
        qi = plane_quadric([1, 0, 0], [0, 0, 0]) + plane_quadric([0, 1, 0], [0, 0, 0])
        qj = plane_quadric([0, 0, 1], [0, 0, 0])
        cand = optimal_collapse(qi, qj, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0])
        np.testing.assert_allclose(cand.optimal_position, [0, 0, 0], atol=1e-9)
        assert cand.cost == pytest.approx(0.0, abs=1e-12)

    def test_coplanar_fallback_prefers_midpoint(self):
        q = plane_quadric([0, 0, 1], [0, 0, 0])
        cand = optimal_collapse(q, q, [0.0, 0.0, 0.0], [2.0, 0.0, 0.0])
        np.testing.assert_allclose(cand.optimal_position, [1.0, 0.0, 0.0])
        assert cand.cost == pytest.approx(0.0, abs=1e-12)

    def test_matches_grid_search_on_random_quadrics(self):
        rng = np.random.default_rng(21)
        checked = 0
        while checked < 20:
            q = np.zeros((4, 4))
            for _ in range(rng.integers(3, 8)):
                n = rng.normal(size=3)
                n /= np.linalg.norm(n)
                x0 = rng.uniform(-0.5, 0.5, 3)
                p = np.append(n, -float(n @ x0))
                q += np.outer(p, p)
            sv = np.linalg.svd(q[:3, :3], compute_uv=False)
            if sv[2] < 0.3 * sv[0]:
                continue  # anisotropic valley: argmin may sit cells away
            cand = optimal_collapse(Quadric(q), Quadric.zeros(),
                                    rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
            if np.abs(cand.optimal_position).max() > 1.8:
                continue  # minimizer outside the search box
            g_pos, g_cost = qem_grid_search(q, (-2, -2, -2), (2, 2, 2), steps=41)
            resolution = 4.0 / 40.0
            assert cand.cost <= g_cost + 1e-9
            assert np.abs(cand.optimal_position - g_pos).max() <= resolution
            checked += 1


class TestSimplify:
    def test_flat_grid_collapses_to_plane(self):
        """162-face coplanar grid -> <= 8 faces, still flat, boundary kept."""
        mesh = make_grid(10, 10)
        out = simplify(mesh, target_faces=8, boundary_weight=1e3)
        assert len(out.faces) <= 8
        assert len(out.faces) >= 2
        np.testing.assert_allclose(out.vertices[:, 2], 0.0, atol=1e-9)
        out.analyze()
        # boundary vertices must stay on the unit square's outline
        for v, on_boundary in zip(out.vertices, out.boundary_flags):
            if on_boundary:
                dist_to_outline = min(abs(v[0]), abs(v[0] - 1.0),
                                      abs(v[1]), abs(v[1] - 1.0))
                assert dist_to_outline <= 1e-6

    def test_icosphere_structural_quality(self):
        """1280 -> 128 faces: manifold, consistently oriented, no flips."""
        mesh = make_icosphere(3)
        out = simplify(mesh, target_faces=128)
        assert len(out.faces) <= 128
        assert out.is_manifold_closed()
        assert out.euler_characteristic() == 2
        normals = out.face_normals()
        centers = out.vertices[out.faces].mean(axis=1)
        assert np.all(np.einsum("ij,ij->i", normals, centers) > 0.0), \
            "face oriented inward (flipped)"

    def test_icosphere_distance_to_original_surface(self):
        """Simplified vertices stay within 2% of bbox diagonal (exhaustive)."""
        mesh = make_icosphere(3)
        out = simplify(mesh, target_faces=128)
        lo, hi = mesh.aabb()
        diag = float(np.linalg.norm(hi - lo))
        dists = point_mesh_distance(out.vertices, mesh)
        assert dists.max() <= 0.02 * diag

    def test_face_count_monotone_vertex_count_per_collapse(self):
        mesh = make_icosphere(1)
        engine = SimplifyEngine(mesh)
        faces_before = engine.alive_face_count
        verts_before = sum(1 for v, f in engine.vertex_faces.items() if f)
        for _ in range(10):
            assert engine.step() is not None
            faces_now = engine.alive_face_count
            verts_now = sum(1 for v, f in engine.vertex_faces.items() if f)
            assert faces_now <= faces_before
            assert verts_now == verts_before - 1
            faces_before, verts_before = faces_now, verts_now

    def test_accepted_cost_is_global_minimum_among_valid(self):
        """Priority-queue correctness against a scan-all-edges reference."""
        mesh = make_icosphere(1)
        engine = SimplifyEngine(mesh)
        for _ in range(15):
            costs = []
            for i, j in engine.alive_edges():
                cand = engine.candidate_for(i, j)
                if engine.is_valid_collapse(i, j, cand.optimal_position):
                    costs.append(cand.cost)
            result = engine.step()
            if result is None:
                break
            _, accepted_cost = result
            assert accepted_cost <= min(costs) + 1e-12

    def test_feature_edges_pin_box_creases(self):
        """Subdivided box 768 -> 48 faces: the 90-degree creases exceed the
        40-degree feature threshold, so corners and faces survive exactly."""
        from conftest import subdivide
        from proxycull import make_box
        dense = subdivide(make_box((0.0, 0.0, 0.0), (2.0, 2.0, 2.0)), 3)
        assert len(dense.faces) == 768
        out = simplify(dense, target_faces=48, feature_angle_deg=40.0)
        assert len(out.faces) <= 48
        assert out.is_manifold_closed()
        v = out.vertices
        plane_dist = np.minimum.reduce(
            [np.abs(v[:, k]) for k in range(3)]
            + [np.abs(v[:, k] - 2.0) for k in range(3)])
        assert plane_dist.max() <= 1e-9
        corners = np.array([[x, y, z] for x in (0.0, 2.0)
                            for y in (0.0, 2.0) for z in (0.0, 2.0)])
        corner_err = np.linalg.norm(v[None, :, :] - corners[:, None, :],
                                    axis=2).min(axis=1)
        assert corner_err.max() <= 1e-9

    def test_target_too_low_rejected(self):
        with pytest.raises(ValueError):
            simplify(make_icosphere(1), target_faces=3)

    def test_queue_exhaustion_reports_and_returns(self, caplog):
        """A single triangle cannot collapse further; result is unchanged."""
        mesh = TriangleMesh(
            np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
            np.array([[0, 1, 2]], dtype=np.int32))
        with caplog.at_level("WARNING"):
            out = simplify(mesh, target_faces=4)
        assert len(out.faces) == 1
