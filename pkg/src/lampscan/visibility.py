"""Visible-edge extraction: prominent (sharp/outline) edges, a software depth
buffer for occlusion tests, per-sample clipping and edge subdivision."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidArgumentError
from .mesh import Edge3D, TriMesh
from .se3 import CameraIntrinsics, Pose

# Sharp when the interior dihedral angle is below 140 degrees, i.e. the
# adjacent normals' dot product is below cos(40 deg).
DEFAULT_SHARP_COS = math.cos(math.radians(40.0))

DEPTH_BIAS_SCALE = 1e-3  # occlusion tolerance proportional to view depth


@dataclass(frozen=True)
class DepthBuffer:
    """Per-pixel nearest view-space depth; +inf where nothing was drawn."""

    width: int
    height: int
    depth: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.depth, dtype=np.float64)
        if d.shape != (self.height, self.width):
            raise InvalidArgumentError("depth shape does not match dims")
        d.setflags(write=False)
        object.__setattr__(self, "depth", d)


def _front_facing(mesh: TriMesh, pose: Pose) -> np.ndarray:
    """Per-face flag: normal points toward the camera for this pose."""
    centroids = mesh.vertices[mesh.faces].mean(axis=1)
    c_cam = pose.apply(centroids)
    n_cam = mesh.face_normals @ pose.rotation.T
    return np.einsum("ij,ij->i", n_cam, c_cam) < 0.0


def extract_prominent_edges(mesh: TriMesh, pose: Pose,
                            sharp_threshold: float = DEFAULT_SHARP_COS) -> list[Edge3D]:
    """Edges worth matching: sharp ones and, for this pose, outline ones.

    Sharpness is pose-independent: a two-face edge is sharp when its normals'
    dot product is under the threshold and the edge is convex. Outline edges
    have exactly one front-facing adjacent face; boundary (one-face) edges can
    only qualify as outline. Returned points are in mesh coordinates.
    """
    if len(mesh.faces) == 0:
        return []
    front = _front_facing(mesh, pose)
    out = []
    for idx in range(mesh.n_edges):
        ia, ib = mesh.edge_vertices[idx]
        fs = mesh.edge_faces[idx]
        sharp = False
        if len(fs) == 2:
            fa, fb = fs
            na = mesh.face_normals[fa]
            nb = mesh.face_normals[fb]
            if float(na @ nb) < sharp_threshold:
                mid = 0.5 * (mesh.vertices[ia] + mesh.vertices[ib])
                vb = mesh.vertices[mesh.opposite_vertex(fb, ia, ib)] - mid
                sharp = float(na @ vb) < 0.0  # convex dihedral only
        outline = sum(bool(front[f]) for f in fs) == 1
        if sharp or outline:
            out.append(Edge3D(mesh.vertices[ia], mesh.vertices[ib], fs))
    return out


def rasterize_into(buffer: np.ndarray, mesh: TriMesh, pose: Pose,
                   cam: CameraIntrinsics) -> None:
    """Accumulate a mesh into a writable depth raster (min-depth).

    Triangles with any vertex at or behind the camera are skipped (no
    near-plane clipping); pixels sample at integer coordinates.
    """
    if len(mesh.faces) == 0:
        return
    v_cam = pose.apply(mesh.vertices)
    tri = v_cam[mesh.faces]  # (T, 3, 3)
    z = tri[:, :, 2]
    ok = (z > 1e-6).all(axis=1)
    if not ok.any():
        return
    tri = tri[ok]
    z = z[ok]
    uv = np.empty((len(tri), 3, 2))
    uv[:, :, 0] = cam.focal_x * tri[:, :, 0] / z + cam.principal_x
    uv[:, :, 1] = cam.focal_y * tri[:, :, 1] / z + cam.principal_y
    kernels.rasterize_triangles(buffer, np.ascontiguousarray(uv),
                                np.ascontiguousarray(z))


def rasterize_depth(mesh: TriMesh, pose: Pose, cam: CameraIntrinsics) -> DepthBuffer:
    """Software depth rendering of a mesh for occlusion testing."""
    if cam.width <= 0 or cam.height <= 0:
        raise InvalidArgumentError("camera dimensions must be positive")
    buf = np.full((cam.height, cam.width), np.inf)
    rasterize_into(buf, mesh, pose, cam)
    return DepthBuffer(cam.width, cam.height, buf)


def clip_visible(edges, depth: DepthBuffer, pose: Pose, cam: CameraIntrinsics,
                 sample_step: float = 2.0) -> list[Edge3D]:
    """Keep the unoccluded parts of each edge.

    Each edge is discretized at <= sample_step pixel spacing; a sample is
    visible when its view depth does not exceed the buffer depth plus a
    proportional bias, or when it projects outside the image (nothing can
    occlude it there). Maximal visible runs are compacted into sub-edges.
    Edges with an endpoint behind the camera are dropped.
    """
    out = []
    for e in edges:
        a_cam = pose.apply(e.point_a)
        b_cam = pose.apply(e.point_b)
        if a_cam[2] <= 1e-9 or b_cam[2] <= 1e-9:
            continue
        ua = np.array([cam.focal_x * a_cam[0] / a_cam[2] + cam.principal_x,
                       cam.focal_y * a_cam[1] / a_cam[2] + cam.principal_y])
        ub = np.array([cam.focal_x * b_cam[0] / b_cam[2] + cam.principal_x,
                       cam.focal_y * b_cam[1] / b_cam[2] + cam.principal_y])
        n = max(2, int(math.ceil(np.linalg.norm(ub - ua) / sample_step)) + 1)
        t = np.linspace(0.0, 1.0, n)
        p_cam = a_cam[None, :] + t[:, None] * (b_cam - a_cam)[None, :]
        z = p_cam[:, 2]
        px = np.rint(cam.focal_x * p_cam[:, 0] / z + cam.principal_x).astype(np.int64)
        py = np.rint(cam.focal_y * p_cam[:, 1] / z + cam.principal_y).astype(np.int64)
        inside = (px >= 0) & (px < cam.width) & (py >= 0) & (py < cam.height)
        visible = ~inside
        # compare against the neighborhood max: a sample on a slanted surface
        # reads its own face at a slightly nearer depth (raster interpolation),
        # which must not count as an occluder; real occluders cover whole
        # neighborhoods at clearly nearer depth
        pxi = px[inside]
        pyi = py[inside]
        buf = np.full(len(pxi), -np.inf)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                qx = np.clip(pxi + dx, 0, cam.width - 1)
                qy = np.clip(pyi + dy, 0, cam.height - 1)
                np.maximum(buf, depth.depth[qy, qx], out=buf)
        visible[inside] = z[inside] <= buf + DEPTH_BIAS_SCALE * z[inside]
        # compact maximal visible runs into sub-edges
        start = None
        for i in range(n + 1):
            if i < n and visible[i]:
                if start is None:
                    start = i
            elif start is not None:
                if i - 1 > start:
                    pa = e.point_a + t[start] * (e.point_b - e.point_a)
                    pb = e.point_a + t[i - 1] * (e.point_b - e.point_a)
                    out.append(Edge3D(pa, pb, e.adjacent_faces))
                start = None
    return out


def subdivide(edges, fraction: float) -> list[Edge3D]:
    """Split every edge into equal pieces no longer than fraction times the
    longest input edge; total length is preserved."""
    if not 0.0 < fraction <= 1.0:
        raise InvalidArgumentError(f"fraction {fraction} outside (0, 1]")
    edges = list(edges)
    if not edges:
        return []
    target = fraction * max(e.length for e in edges)
    out = []
    for e in edges:
        pieces = max(1, int(math.ceil(e.length / target - 1e-12)))
        delta = (e.point_b - e.point_a) / pieces
        for k in range(pieces):
            out.append(Edge3D(e.point_a + k * delta, e.point_a + (k + 1) * delta,
                              e.adjacent_faces))
    return out
