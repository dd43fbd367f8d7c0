"""Synthetic scene generation, the frame pipeline and the oracle suite."""

from __future__ import annotations

import filecmp

import numpy as np
from proxycull import (AnchorSet, SceneBundle, generate_synthetic_scene,
                       make_box, run_pipeline, rasterize_depth)
from proxycull import io as pio
from proxycull.kernels import VERDICT_KEPT, VERDICT_OCCLUDED
from proxycull.oracles import oracle_suite, reference_cull_anchors
from proxycull.scene import PipelineConfig

from conftest import perspective_camera


def small_scene(seed=3, **kw):
    defaults = dict(extent=50.0, box_count=8, anchor_count=4_000,
                    camera_count=2, width=128, height=128)
    defaults.update(kw)
    return generate_synthetic_scene(seed, **defaults)


class TestGeneration:
    def test_same_seed_byte_identical(self, tmp_path):
        a = small_scene(seed=0)
        b = small_scene(seed=0)
        pio.save_scene(a, tmp_path / "a")
        pio.save_scene(b, tmp_path / "b")
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
        match, mismatch, errors = filecmp.cmpfiles(
            tmp_path / "a", tmp_path / "b", names, shallow=False)
        assert not mismatch and not errors

    def test_different_seeds_differ(self):
        a = small_scene(seed=1)
        b = small_scene(seed=2)
        assert not np.array_equal(a.anchors.positions, b.anchors.positions)

    def test_open_ground_plane_occludes_only_below_ground(self):
        """Single occluder (the ground): only below-ground anchors get culled.

        Checked at steep incidence (camera looking down) where per-pixel
        depth quantization cannot blur the ground boundary.
        """
        from proxycull import make_grid
        cam = perspective_camera(width=96, height=96, near=0.5, far=200.0,
                                 eye=(0.0, 0.0, 30.0), target=(0.0, 12.0, 0.0))
        ground = make_grid(9, 9, origin=(-40.0, -40.0, 0.0), size=(80.0, 80.0))
        rng = np.random.default_rng(5)
        anchors = np.stack([rng.uniform(-15, 15, 4_000),
                            rng.uniform(0, 25, 4_000),
                            rng.uniform(-3.0, 6.0, 4_000)], axis=1)
        bundle = SceneBundle(ground, [cam], AnchorSet(anchors), PipelineConfig())
        depth, mask, stats = run_pipeline(bundle, 0)
        occluded = mask.verdicts == VERDICT_OCCLUDED
        assert occluded.any()
        assert np.all(bundle.anchors.positions[occluded][:, 2] < 0.0)
        # and anchors clearly below ground on ground pixels are indeed culled
        clearly_below = ((mask.verdicts != 1) & (mask.verdicts != 2)
                         & (bundle.anchors.positions[:, 2] < -1.0))
        assert np.all(mask.verdicts[clearly_below] == VERDICT_OCCLUDED)

    def test_generated_open_ground_culls_mostly_below_ground(self):
        """Street generator with no boxes: the occluded set is the
        below-ground offset population (grazing pixels may add a sliver)."""
        bundle = small_scene(seed=5, box_count=0, anchor_count=6_000)
        depth, mask, stats = run_pipeline(bundle, 0)
        occluded = mask.verdicts == VERDICT_OCCLUDED
        assert occluded.any()
        z = bundle.anchors.positions[occluded][:, 2]
        assert np.all(z < 0.5), "an air anchor was occluded by the bare ground"
        assert (z < 0.0).mean() > 0.9

    def test_anchor_count_and_clusters(self):
        bundle = small_scene()
        assert bundle.anchors.count == 4_000
        sizes = [len(c.triangle_indices) for c in bundle.clusters]
        assert sum(sizes) == len(bundle.proxy_mesh.faces)


class TestRunPipeline:
    def test_empty_anchor_handling(self):
        bundle = small_scene()
        bundle.anchors = AnchorSet(np.empty((0, 3)))
        depth, mask, stats = run_pipeline(bundle, 0)
        assert stats.anchors_in == 0
        assert stats.anchors_kept == 0

    def test_camera_inside_closed_box_occludes_everything_ahead(self):
        cam = perspective_camera(width=64, height=64, near=0.1, far=200.0)
        box = make_box((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))
        rng = np.random.default_rng(2)
        outside = np.stack([rng.uniform(-20, 20, 400),
                            rng.uniform(5.0, 60.0, 400),
                            rng.uniform(-20, 20, 400)], axis=1)
        bundle = SceneBundle(box, [cam], AnchorSet(outside), PipelineConfig())
        depth, mask, stats = run_pipeline(bundle, 0)
        in_frustum = np.isin(mask.verdicts, [VERDICT_KEPT, VERDICT_OCCLUDED])
        assert in_frustum.any()
        assert np.all(mask.verdicts[in_frustum] == VERDICT_OCCLUDED)

    def test_stats_partition_and_bounds(self):
        bundle = small_scene(seed=7)
        for cam_idx in range(len(bundle.cameras)):
            depth, mask, stats = run_pipeline(bundle, cam_idx)
            assert stats.invariant_violations() == []
            assert (stats.clusters_drawn + stats.clusters_frustum_culled
                    + stats.clusters_occlusion_culled) == len(bundle.clusters)
            assert stats.anchors_kept == mask.kept_count
            assert stats.depth_ms >= 0 and stats.filter_ms >= 0
            assert stats.total_ms >= stats.depth_ms + stats.filter_ms - 1e-6

    def test_kept_counts_match_reference_path(self):
        bundle = small_scene(seed=9)
        depth, mask, _ = run_pipeline(bundle, 1)
        ref = reference_cull_anchors(bundle.anchors.positions, bundle.cameras[1],
                                     depth, bundle.config.gamma)
        assert np.array_equal(mask.verdicts, ref)

    def test_gamma_override(self):
        bundle = small_scene(seed=11)
        _, loose, _ = run_pipeline(bundle, 0, gamma=5.0)
        _, tight, _ = run_pipeline(bundle, 0, gamma=0.0)
        assert loose.kept_count >= tight.kept_count


class TestOracleSuite:
    def test_all_oracles_pass_on_generated_scene(self):
        bundle = small_scene(seed=13, anchor_count=2_000)
        report = oracle_suite(bundle, 0)
        assert report.all_passed, "\n".join(report.summary_lines())
        names = {r.name for r in report.results}
        assert names == {"raster_raycast", "hiz_footprint", "anchor_cull",
                         "back_project", "qem_minimizer"}

    def test_fault_injection_reports_first_mismatching_anchor(self):
        """A corrupted depth map fed to the fast path must be caught."""
        bundle = small_scene(seed=13, anchor_count=2_000)
        cam = bundle.cameras[0]
        depth = rasterize_depth(bundle.proxy_mesh, cam)
        corrupted = pio.DepthMap(np.minimum(depth.values, np.float32(0.02)),
                                 depth.near, depth.far)
        report = oracle_suite(bundle, 0, depth_override=corrupted)
        anchor_result = next(r for r in report.results if r.name == "anchor_cull")
        assert not anchor_result.passed
        assert "first mismatch at anchor" in anchor_result.detail

    def test_20_seed_batch_aggregates_zero_violations(self):
        """Small-scene batch: every oracle passes on every seed."""
        failures = []
        for seed in range(20):
            bundle = generate_synthetic_scene(
                seed, extent=30.0, box_count=4, anchor_count=300,
                camera_count=1, width=48, height=48)
            rep = oracle_suite(bundle, 0, seed=seed)
            failures += [f"seed {seed}: {line}" for line in rep.summary_lines()
                         if line.startswith("FAIL")]
        assert failures == [], "\n".join(failures)


class TestDepthTestDiagnostics:
    def test_operand_report(self):
        from proxycull.visibility import depth_test_operands
        bundle = small_scene(seed=3)
        cam = bundle.cameras[0]
        depth, _, _ = run_pipeline(bundle, 0)
        seen = 0
        for p in bundle.anchors.positions[:200]:
            info = depth_test_operands(cam, p, depth, gamma=0.3)
            if info is None:
                continue
            seen += 1
            assert info["view_depth"] > 0
            if info["d_hat"] is not None:
                assert info["culled"] == (info["view_depth"] > info["d_hat"])
        assert seen > 50
