"""Scene bundles and the seeded synthetic street generator."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .camera import Camera
from .clusters import Cluster, build_clusters
from .mesh import TriangleMesh, make_box, make_grid, merge_meshes
from .visibility import AnchorSet


@dataclass
class PipelineConfig:
    """Every tunable constant of the pipeline in one place."""

    gamma: float = 0.3                 # safety margin (world units) on linearized depth
    tau_near: float = 1e-4             # homogeneous-w validity gate
    eps: float = 1e-7                  # guard added to w before NDC division
    padding: int = 1                   # screen-rect padding (0 or 1)
    level_bias: int = 1                # Hi-Z level constant c (1 or 2)
    patch_size: int = 16               # densification patch edge, pixels
    grid_capacity: int = 4             # anchors admitted per proxy-grid cell
    grid_cells_per_diagonal: float = 512.0
    boundary_weight: float = 1e3       # constraint-plane weight lambda_b
    feature_angle_deg: float = 40.0
    tau_min: int = 32                  # cluster size bounds
    tau_max: int = 128
    tile_size: int = 64                # rasterizer tile edge, pixels
    hiz_depth_bias: float = 1e-6

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        cfg = cls()
        unknown = set(data) - set(cfg.to_dict())
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, value in data.items():
            default = getattr(cfg, key)
            setattr(cfg, key, type(default)(value))
        return cfg


@dataclass
class SceneBundle:
    """Proxy mesh, its clusters, cameras, anchors and the parameter set."""

    proxy_mesh: TriangleMesh
    cameras: list[Camera]
    anchors: AnchorSet
    config: PipelineConfig = field(default_factory=PipelineConfig)
    clusters: list[Cluster] | None = None

    def ensure_clusters(self) -> list[Cluster]:
        if self.clusters is None:
            self.clusters = build_clusters(self.proxy_mesh, self.config.tau_min,
                                           self.config.tau_max)
        return self.clusters


def generate_synthetic_scene(seed: int, extent: float = 120.0, box_count: int = 50,
                             anchor_count: int = 100_000, camera_count: int = 4,
                             width: int = 1000, height: int = 1000,
                             config: PipelineConfig | None = None) -> SceneBundle:
    """Deterministic box-world street scene.

    A ground plane with two rows of axis-aligned "buildings" flanking a
    street corridor along +y; cameras walk the street looking forward;
    anchors are sampled half near surfaces (with a +-0.5 offset along the
    face normal, so some land below ground) and half uniformly in the air.
    """
    if min(box_count, anchor_count, camera_count) < 0 or camera_count < 1 or anchor_count < 1:
        raise ValueError("anchor_count and camera_count must be >= 1, box_count >= 0")
    rng = np.random.default_rng(seed)
    half = extent / 2.0
    street_half_width = 5.0

    parts = [make_grid(13, 13, origin=(-half, -half, 0.0), size=(extent, extent))]
    slots_per_row = max(1, (box_count + 3) // 4)
    slot_len = extent / slots_per_row
    for i in range(box_count):
        side = 1.0 if i % 2 == 0 else -1.0
        row = (i // 2) % 2
        slot = (i // 4) % slots_per_row
        inner = street_half_width + 1.0 + row * 14.0
        bw = rng.uniform(7.0, 13.0)
        bd = rng.uniform(6.0, slot_len * 0.95)
        bh = rng.uniform(10.0, 32.0)
        x0 = side * inner + (0.0 if side > 0 else -bw)
        y0 = -half + slot * slot_len + rng.uniform(0.0, max(slot_len - bd, 1e-3))
        parts.append(make_box((x0, y0, 0.0), (x0 + bw, y0 + bd, bh)))
    mesh = merge_meshes(parts).validate()

    cameras = []
    for k in range(camera_count):
        cam_y = -half + 8.0 + (extent - 30.0) * (k / max(camera_count - 1, 1))
        cam_x = rng.uniform(-3.0, 3.0)
        eye = (cam_x, cam_y, 1.7)
        target = (cam_x + rng.uniform(-2.0, 2.0), cam_y + 30.0, 1.7 + rng.uniform(-1.0, 2.0))
        cameras.append(Camera.look_at(eye, target, fov_y_deg=65.0,
                                      width=width, height=height,
                                      near=0.1, far=extent * 4.0))

    n_surface = anchor_count // 2
    n_air = anchor_count - n_surface
    tri = mesh.vertices[mesh.faces]
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    probs = areas / areas.sum()
    picks = rng.choice(len(tri), size=n_surface, p=probs)
    r1 = np.sqrt(rng.random(n_surface))
    r2 = rng.random(n_surface)
    bary = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    pts = np.einsum("nk,nkj->nj", bary, tri[picks])
    normals = mesh.face_normals()[picks]
    offsets = rng.uniform(-0.5, 0.5, size=n_surface)
    surface_anchors = pts + offsets[:, None] * normals

    air = np.stack([
        rng.uniform(-half, half, n_air),
        rng.uniform(-half, half, n_air),
        rng.uniform(0.0, 28.0, n_air),
    ], axis=1)
    positions = np.concatenate([surface_anchors, air])
    # quantize so the 3xfloat32 interchange format round-trips bit-exactly
    positions = positions.astype(np.float32).astype(np.float64)

    cfg = config if config is not None else PipelineConfig()
    bundle = SceneBundle(mesh, cameras, AnchorSet(positions).validate(), cfg)
    bundle.ensure_clusters()
    return bundle
