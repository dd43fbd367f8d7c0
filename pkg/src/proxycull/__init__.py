"""proxycull: proxy-mesh occlusion culling toolkit.

Pipeline: simplify a reconstruction mesh into a lightweight proxy
(quadric error metrics), partition it into clusters, rasterize depth-only
views in software, build hierarchical-Z pyramids, cull occluded anchor
points with a fused projection/depth-test kernel, and plan
surface-projected anchor densification. Every fast path ships with an
independent brute-force oracle.
"""

from .backend import BACKEND, backend_name
from .camera import (Camera, CameraError, NdcPoint, PixelCoord, back_project,
                     linearize_depth, ndc_to_pixel, normalize_convention, project)
from .clusters import (Cluster, ScreenRect, build_clusters, conservative_depth,
                       screen_rect, snap_level)
from .densify import (DensificationPlan, ErrorImage, PatchGrid, ProxyGrid,
                      grid_insert, plan_anchors, select_patches)
from .hiz import HiZPyramid, build_hiz, rect_max
from .mesh import TriangleMesh, make_box, make_grid, make_icosphere, merge_meshes
from .pipeline import FrameStats, run_pipeline
from .raster import DepthMap, rasterize_depth
from .scene import PipelineConfig, SceneBundle, generate_synthetic_scene
from .simplify import (CollapseCandidate, Quadric, SimplifyEngine,
                       optimal_collapse, simplify, vertex_quadrics)
from .visibility import (AnchorSet, CullMask, FrustumPlanes, cull_anchors,
                         cull_anchors_staged, extract_frustum, frustum_cull,
                         occlusion_cull_clusters)

__version__ = "0.1.0"
