"""Patch selection, proxy-grid insertion and densification planning."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from proxycull import (ErrorImage, ProxyGrid, grid_insert, plan_anchors,
                       rasterize_depth, select_patches, project)
from proxycull.camera import linearize_depth
from proxycull.oracles import reference_back_project, reference_select_patches

from conftest import perspective_camera
from test_visibility import wall_scene


class TestSelectPatches:
    def test_uniform_image_selects_nothing(self):
        error = ErrorImage(np.full((64, 64), 0.7))
        grid = select_patches(error, patch_size=16)
        assert not grid.selected.any()
        assert grid.frame_mean == pytest.approx(0.7)

    def test_all_zero_selects_nothing(self):
        grid = select_patches(ErrorImage(np.zeros((32, 32))), patch_size=16)
        assert not grid.selected.any()

    def test_single_hot_patch(self):
        """One patch at 4x the others: 4m > 3 * (19m/16) for 16 patches."""
        values = np.full((64, 64), 1.0)
        values[16:32, 32:48] = 4.0
        grid = select_patches(ErrorImage(values), patch_size=16)
        assert grid.selected.sum() == 1
        assert grid.selected[1, 2]
        assert grid.patch_loss[1, 2] == pytest.approx(4.0)
        assert grid.frame_mean == pytest.approx(19.0 / 16.0)

    def test_partial_edge_patches_use_actual_extent(self):
        values = np.ones((20, 20))
        values[16:, 16:] = 100.0  # the 4x4 corner patch
        grid = select_patches(ErrorImage(values), patch_size=16)
        assert grid.patch_loss.shape == (2, 2)
        assert grid.patch_loss[1, 1] == pytest.approx(100.0)
        assert grid.patch_bounds(1, 1) == (16, 16, 20, 20)
        assert grid.representative_pixel(1, 1) == (18, 18)

    @pytest.mark.parametrize("scale", [2.0, 0.25, 3.7])
    def test_selection_scale_covariant(self, scale):
        rng = np.random.default_rng(7)
        values = rng.random((80, 80)) ** 4
        base = select_patches(ErrorImage(values), 16).selected
        scaled = select_patches(ErrorImage(values * scale), 16).selected
        assert np.array_equal(base, scaled)

    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            values = rng.random((48, 48)) ** 3
            grid = select_patches(ErrorImage(values), 16)
            _, ref_mean, ref_sel = reference_select_patches(values, 16)
            assert grid.frame_mean == pytest.approx(ref_mean, rel=1e-12)
            assert np.array_equal(grid.selected, ref_sel)

    def test_image_smaller_than_patch_rejected(self):
        with pytest.raises(ValueError):
            select_patches(ErrorImage(np.zeros((8, 8))), patch_size=16)

    def test_negative_losses_rejected(self):
        with pytest.raises(ValueError):
            ErrorImage(np.full((16, 16), -1.0)).validate()


class TestProxyGrid:
    def test_floor_cell_arithmetic(self):
        grid = ProxyGrid(np.zeros(3), 1.0, 4)
        assert grid.cell_of([1.5, 0.0, 0.0]) == (1, 0, 0)

    def test_negative_coordinates_floor_toward_minus_infinity(self):
        grid = ProxyGrid(np.zeros(3), 1.0, 4)
        assert grid.cell_of([-0.5, 0.0, 0.0]) == (-1, 0, 0)

    def test_capacity_exhaustion(self):
        grid = ProxyGrid(np.zeros(3), 1.0, 2)
        p = [0.5, 0.5, 0.5]
        assert grid_insert(grid, p)
        assert grid_insert(grid, p)
        assert not grid_insert(grid, p)
        assert grid.occupancy[(0, 0, 0)] == 2

    @given(st.integers(1, 6), st.integers(0, 400))
    def test_occupancy_never_exceeds_capacity(self, capacity, seed):
        rng = np.random.default_rng(seed)
        grid = ProxyGrid(np.array([-1.0, -1.0, -1.0]), 0.7, capacity)
        for p in rng.uniform(-2, 2, (200, 3)):
            grid_insert(grid, p)
        assert all(v <= capacity for v in grid.occupancy.values())

    def test_bad_parameters_rejected(self):
        with pytest.raises(ValueError):
            ProxyGrid(np.zeros(3), 0.0, 4)
        with pytest.raises(ValueError):
            ProxyGrid(np.zeros(3), 1.0, 0)


class TestPlanAnchors:
    def make_setup(self, wall_depth=5.0):
        cam = perspective_camera(width=64, height=64, near=1.0, far=100.0)
        depth = rasterize_depth(wall_scene(cam, wall_depth), cam)
        return cam, depth

    def hot_patch_error(self, width, height, px, py, patch=16):
        values = np.ones((height, width)) * 0.01
        values[py * patch:(py + 1) * patch, px * patch:(px + 1) * patch] = 10.0
        return ErrorImage(values)

    def test_anchor_lands_on_wall_surface(self):
        """Back-projected patch center matches the scalar unprojection."""
        cam, depth = self.make_setup(wall_depth=5.0)
        patches = select_patches(self.hot_patch_error(64, 64, 1, 1), 16)
        grid = ProxyGrid(np.array([-100.0, -100.0, -100.0]), 1.0, 4)
        plan = plan_anchors(patches, depth, cam, grid, frame_id=3)
        assert len(plan.new_anchor_positions) == 1
        assert plan.sources == [(3, 1, 1)]
        u, v = patches.representative_pixel(1, 1)
        d589 = linearize_depth(float(depth.values[v, u]), depth.near, depth.far)
        expected = reference_back_project(cam, u, v, d589)
        np.testing.assert_allclose(plan.new_anchor_positions[0], expected, atol=1e-9)
        # lies on the wall plane (view depth 5) up to float32 depth rounding
        view = cam.view_matrix @ np.append(plan.new_anchor_positions[0], 1.0)
        assert view[2] == pytest.approx(5.0, abs=1e-4)

    def test_background_patch_skipped_without_rejection(self):
        cam = perspective_camera(width=64, height=64, near=1.0, far=100.0)
        empty = rasterize_depth(wall_scene(cam, 5.0), cam)
        empty.values[:, :] = 1.0  # force background everywhere
        patches = select_patches(self.hot_patch_error(64, 64, 2, 2), 16)
        grid = ProxyGrid(np.zeros(3), 1.0, 4)
        plan = plan_anchors(patches, empty, cam, grid)
        assert len(plan.new_anchor_positions) == 0
        assert plan.rejected_count == 0

    def test_capacity_contention_resolves_row_major(self):
        """K=1, two selected patches into one cell: first in row-major wins."""
        cam, depth = self.make_setup(wall_depth=5.0)
        values = np.ones((64, 64)) * 0.01
        values[0:16, 0:16] = 10.0    # patch (0, 0)
        values[16:32, 0:16] = 10.0   # patch (0, 1): same cell (huge cells)
        patches = select_patches(ErrorImage(values), 16)
        grid = ProxyGrid(np.array([-1000.0, -1000.0, -1000.0]), 5000.0, 1)
        plan = plan_anchors(patches, depth, cam, grid)
        assert len(plan.new_anchor_positions) == 1
        assert plan.rejected_count == 1
        assert plan.sources[0] == (0, 0, 0)  # row-major: y=0 first
        assert list(grid.occupancy.values()) == [1]

    def test_every_anchor_reprojects_into_its_patch(self):
        rng = np.random.default_rng(13)
        cam, depth = self.make_setup(wall_depth=7.0)
        values = rng.random((64, 64)) * 0.1
        for px, py in ((0, 0), (2, 1), (3, 3), (1, 2)):
            values[py * 16:(py + 1) * 16, px * 16:(px + 1) * 16] += 5.0
        patches = select_patches(ErrorImage(values), 16)
        assert patches.selected.sum() == 4
        grid = ProxyGrid(np.array([-500.0, -500.0, -500.0]), 0.5, 8)
        plan = plan_anchors(patches, depth, cam, grid)
        for pos, (frame, px, py) in zip(plan.new_anchor_positions, plan.sources):
            ndc = project(cam, pos)
            assert ndc.valid
            sx = int((ndc.x_ndc + 1.0) * 0.5 * cam.width)
            sy = int((ndc.y_ndc + 1.0) * 0.5 * cam.height)
            x0, y0, x1, y1 = patches.patch_bounds(px, py)
            assert x0 <= sx < x1
            assert y0 <= sy < y1

    def test_multi_frame_shared_grid_capacity(self):
        """Two frames share one grid: global capacity applies across frames."""
        cam, depth = self.make_setup(wall_depth=5.0)
        patches = select_patches(self.hot_patch_error(64, 64, 1, 1), 16)
        grid = ProxyGrid(np.array([-1000.0, -1000.0, -1000.0]), 5000.0, 1)
        plan1 = plan_anchors(patches, depth, cam, grid, frame_id=0)
        plan2 = plan_anchors(patches, depth, cam, grid, frame_id=1)
        assert len(plan1.new_anchor_positions) == 1
        assert len(plan2.new_anchor_positions) == 0
        assert plan2.rejected_count == 1

    def test_dimension_mismatch_rejected(self):
        cam, depth = self.make_setup()
        patches = select_patches(ErrorImage(np.ones((32, 32))), 16)
        grid = ProxyGrid(np.zeros(3), 1.0, 4)
        with pytest.raises(ValueError, match="does not match"):
            plan_anchors(patches, depth, cam, grid)

    def test_matches_python_reference_exactly(self):
        """Same admissions, rejections and positions as a naive loop."""
        rng = np.random.default_rng(15)
        cam, depth = self.make_setup(wall_depth=6.0)
        values = rng.random((64, 64)) * 0.05
        hot = rng.random((8, 8)) < 0.3  # scatter hot 8x8 patches
        for py, px in zip(*np.nonzero(hot)):
            values[py * 8:(py + 1) * 8, px * 8:(px + 1) * 8] += rng.uniform(1.0, 4.0)
        patches = select_patches(ErrorImage(values), 8)
        assert patches.selected.sum() >= 5
        grid = ProxyGrid(np.array([-50.0, -50.0, -50.0]), 0.3, 2)
        plan = plan_anchors(patches, depth, cam, grid)
        assert plan.rejected_count > 0 or len(plan.new_anchor_positions) > 0

        ref_grid: dict[tuple[int, int, int], int] = {}
        ref_positions = []
        ref_rejected = 0
        npy, npx = patches.selected.shape
        for py in range(npy):
            for px in range(npx):
                if not patches.selected[py, px]:
                    continue
                u, v = patches.representative_pixel(px, py)
                z = depth.values[v, u]
                if z == np.float32(1.0):
                    continue
                d = linearize_depth(float(z), depth.near, depth.far)
                p = reference_back_project(cam, u, v, d)
                cell = tuple(int(np.floor(c)) for c in (p - np.array([-50.0] * 3)) / 0.3)
                if ref_grid.get(cell, 0) < 2:
                    ref_grid[cell] = ref_grid.get(cell, 0) + 1
                    ref_positions.append(p)
                else:
                    ref_rejected += 1
        assert plan.rejected_count == ref_rejected
        assert len(plan.new_anchor_positions) == len(ref_positions)
        if ref_positions:
            np.testing.assert_allclose(plan.new_anchor_positions,
                                       np.array(ref_positions), atol=1e-9)
