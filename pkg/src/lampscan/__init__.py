"""Directional-chamfer pose refinement with an integral distance tensor,
plus BIM-aware plane estimation and clustering for detecting, identifying and
localizing modeled lamps in localized grayscale images."""

__version__ = "0.1.0"

from .bim import (BimSurface, Detection, PlaneEstimate, SurfaceType,
                  closest_ceiling, estimate_offset, msac_plane,
                  parse_surfaces, project_detection)
from .clustering import (Cluster, ConfusionMatrix, LocalizationStats, cluster,
                         compute_stats, identify)
from .edges import DetectorConfig, GrayImage, detect_segments
from .kernels import backend_name
from .mesh import Edge3D, TriMesh, load_mesh, make_box, make_prism, save_mesh
from .refine import (ChamferTensors, RefineMethod, RefineOptions, RefineResult,
                     build_chamfer_tensors, refine, residuals, score)
from .se3 import (CameraIntrinsics, Pose, Segment2D, Twist, exp_map, log_map,
                  project_edge, project_point)
from .tensor import (Dt3Tensor, Idt3Tensor, OrientationPrecomp, build_dt3,
                     build_idt3, edge_distance_direct, edge_distance_idt3,
                     error_bound, error_bound_n, get_image_value,
                     get_pixel_value, load_dt3, precompute_orientation,
                     quantize_orientation, save_dt3, smooth_dt3)
from .visibility import (DepthBuffer, clip_visible, extract_prominent_edges,
                         rasterize_depth, subdivide)

__all__ = [name for name in dir() if not name.startswith("_")]
