"""Building-surface ingestion (gbXML subset), robust ceiling-plane offset
estimation (MSAC with a fixed normal) and ray projection of detections."""

from __future__ import annotations

import math
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (CeilingNotFoundError, InsufficientDataError,
                     InvalidArgumentError, ParallelRayError, SurfaceParseError)

MSAC_MAX_DISTANCE = 0.30  # m
MSAC_SAMPLE_SIZE = 2
MSAC_ITERATIONS = 200


class SurfaceType(Enum):
    CEILING = "Ceiling"
    FLOOR = "Floor"
    WALL = "Wall"
    OTHER = "Other"

    @staticmethod
    def from_attribute(value: str) -> "SurfaceType":
        v = (value or "").strip().lower()
        if "ceiling" in v:
            return SurfaceType.CEILING
        if "floor" in v or "slab" in v:
            return SurfaceType.FLOOR
        if "wall" in v:
            return SurfaceType.WALL
        return SurfaceType.OTHER


@dataclass(frozen=True)
class BimSurface:
    """Planar building surface: polygon plus its plane n.p = offset."""

    id: str
    surface_type: SurfaceType
    polygon: np.ndarray       # (n, 3) meters
    plane_normal: np.ndarray  # unit
    plane_offset: float       # meters

    def __post_init__(self):
        poly = np.ascontiguousarray(self.polygon, dtype=float).reshape(-1, 3)
        n = np.asarray(self.plane_normal, dtype=float).reshape(3)
        poly.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "polygon", poly)
        object.__setattr__(self, "plane_normal", n)

    def max_plane_deviation(self) -> float:
        return float(np.abs(self.polygon @ self.plane_normal - self.plane_offset).max())

    def footprint_contains(self, point) -> bool:
        """2D point-in-polygon on the plane's dominant-axis projection."""
        drop = int(np.argmax(np.abs(self.plane_normal)))
        keep = [i for i in range(3) if i != drop]
        poly2 = self.polygon[:, keep]
        px, py = float(point[keep[0]]), float(point[keep[1]])
        inside = False
        n = len(poly2)
        for i in range(n):
            x1, y1 = poly2[i]
            x2, y2 = poly2[(i + 1) % n]
            if (y1 > py) != (y2 > py):
                xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
                if px < xc:
                    inside = not inside
        return inside


@dataclass(frozen=True)
class Detection:
    """One localized, scored, per-model observation."""

    position: np.ndarray         # meters, world
    camera_position: np.ndarray  # meters, world
    model_id: int
    score: float
    state: bool                  # lamp on?
    frame_index: int

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        c = np.asarray(self.camera_position, dtype=float).reshape(3)
        p.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "camera_position", c)
        if np.array_equal(p, c):
            raise InvalidArgumentError("detection coincides with camera position")


@dataclass(frozen=True)
class PlaneEstimate:
    normal: np.ndarray
    offset: float
    inlier_mask: np.ndarray
    inlier_count: int

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        m = np.asarray(self.inlier_mask, dtype=bool)
        n.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "inlier_mask", m)


def newell_plane(polygon: np.ndarray):
    """Plane fit of a closed polygon (Newell's method): (unit normal, offset)."""
    poly = np.asarray(polygon, dtype=float).reshape(-1, 3)
    nxt = np.roll(poly, -1, axis=0)
    n = np.array([
        np.sum((poly[:, 1] - nxt[:, 1]) * (poly[:, 2] + nxt[:, 2])),
        np.sum((poly[:, 2] - nxt[:, 2]) * (poly[:, 0] + nxt[:, 0])),
        np.sum((poly[:, 0] - nxt[:, 0]) * (poly[:, 1] + nxt[:, 1])),
    ])
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        raise InvalidArgumentError("degenerate polygon: zero-area normal")
    n /= norm
    return n, float(np.mean(poly @ n))


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_surfaces(document: str) -> list[BimSurface]:
    """Read Surface elements (gbXML subset) from an XML string.

    Surfaces carry a surfaceType attribute and a PlanarGeometry/PolyLoop of
    CartesianPoint/Coordinate triples, in meters. Polygons with fewer than 3
    points or that are not planar are skipped with a warning.
    """
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        line = exc.position[0] if exc.position else None
        raise SurfaceParseError(f"malformed XML: {exc.msg.split(':')[0]}", line) from exc
    out = []
    counter = 0
    for elem in root.iter():
        if _local(elem.tag) != "Surface":
            continue
        counter += 1
        sid = elem.get("id") or f"surface-{counter}"
        stype = SurfaceType.from_attribute(elem.get("surfaceType", ""))
        points = []
        for pt in elem.iter():
            if _local(pt.tag) != "CartesianPoint":
                continue
            coords = [float(c.text) for c in pt if _local(c.tag) == "Coordinate"]
            if len(coords) == 3:
                points.append(coords)
        if len(points) < 3:
            warnings.warn(f"surface {sid}: fewer than 3 points, skipped")
            continue
        poly = np.array(points)
        normal, offset = newell_plane(poly)
        surface = BimSurface(sid, stype, poly, normal, offset)
        if surface.max_plane_deviation() > 1e-6:
            warnings.warn(f"surface {sid}: polygon not planar, skipped")
            continue
        out.append(surface)
    return out


def load_surfaces(path) -> list[BimSurface]:
    with open(path) as f:
        return parse_surfaces(f.read())


def closest_ceiling(surfaces, detections) -> BimSurface:
    """The ceiling best explaining the detections.

    Among ceilings whose footprint contains the detections' centroid, the one
    with the least mean absolute point-plane distance wins; if none contains
    the centroid, nearest by distance alone.
    """
    ceilings = [s for s in surfaces if s.surface_type is SurfaceType.CEILING]
    if not ceilings:
        raise CeilingNotFoundError("no ceiling surfaces available")
    detections = list(detections)
    if not detections:
        raise InsufficientDataError("no detections to match a ceiling against")
    positions = np.array([d.position for d in detections])
    centroid = positions.mean(axis=0)

    def mean_dist(s):
        return float(np.abs(positions @ s.plane_normal - s.plane_offset).mean())

    containing = [s for s in ceilings if s.footprint_contains(centroid)]
    pool = containing if containing else ceilings
    return min(pool, key=mean_dist)


def estimate_offset(normal, positions) -> float:
    """Least-squares plane offset for a fixed unit normal: mean of n.p."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(positions) == 0:
        raise InvalidArgumentError("need at least one position")
    n = np.asarray(normal, dtype=float).reshape(3)
    return float(np.mean(positions @ n))


def msac_plane(normal, detections, max_distance: float = MSAC_MAX_DISTANCE,
               sample_size: int = MSAC_SAMPLE_SIZE,
               iterations: int = MSAC_ITERATIONS, seed: int = 0) -> PlaneEstimate:
    """MSAC offset estimation for a plane of known normal.

    Each iteration hypothesizes the offset from ``sample_size`` random
    detections and scores it by the truncated squared point-plane residuals;
    the best hypothesis's offset is re-estimated over its inliers.
    Deterministic for a fixed seed.
    """
    detections = list(detections)
    if len(detections) < sample_size:
        raise InsufficientDataError(
            f"{len(detections)} detections < sample size {sample_size}")
    n = np.asarray(normal, dtype=float).reshape(3)
    proj = np.array([d.position for d in detections]) @ n
    rng = np.random.default_rng(seed)
    limit = max_distance * max_distance
    best_score = math.inf
    best_offset = float(np.mean(proj))
    for _ in range(iterations):
        pick = rng.choice(len(proj), size=sample_size, replace=False)
        offset = float(np.mean(proj[pick]))
        r2 = (proj - offset) ** 2
        score = float(np.minimum(r2, limit).sum())
        if score < best_score:
            best_score = score
            best_offset = offset
    inliers = np.abs(proj - best_offset) <= max_distance
    refined = float(np.mean(proj[inliers])) if inliers.any() else best_offset
    inliers = np.abs(proj - refined) <= max_distance
    return PlaneEstimate(n, refined, inliers, int(inliers.sum()))


def project_detection(detection: Detection, plane: PlaneEstimate) -> np.ndarray:
    """Slide a detection along its camera ray onto the plane.

    Solves p = p_c - f t together with n.p = offset; raises when the ray is
    numerically parallel to the plane.
    """
    f = detection.position - detection.camera_position
    f = f / np.linalg.norm(f)
    denom = float(plane.normal @ f)
    if abs(denom) <= 1e-6:
        raise ParallelRayError("ray is parallel to the estimated plane")
    t = (float(plane.normal @ detection.camera_position) - plane.offset) / denom
    return detection.camera_position - f * t


# ---------------------------------------------------------------------------
# Detections CSV interchange
# ---------------------------------------------------------------------------

DETECTIONS_HEADER = "frame,model_id,score,state,px,py,pz,cx,cy,cz"


def save_detections_csv(detections, path) -> None:
    """State serializes as 1 (on) / 0 (off)."""
    with open(path, "w") as f:
        f.write(DETECTIONS_HEADER + "\n")
        for d in detections:
            p, c = d.position, d.camera_position
            f.write(f"{d.frame_index},{d.model_id},{d.score:.9g},{int(d.state)},"
                    f"{p[0]:.9g},{p[1]:.9g},{p[2]:.9g},"
                    f"{c[0]:.9g},{c[1]:.9g},{c[2]:.9g}\n")


def load_detections_csv(path) -> list[Detection]:
    out = []
    with open(path) as f:
        header = f.readline().strip()
        if header != DETECTIONS_HEADER:
            raise InvalidArgumentError(f"{path}: unexpected header {header!r}")
        for ln in f:
            if not ln.strip():
                continue
            parts = ln.split(",")
            out.append(Detection(
                position=np.array([float(parts[4]), float(parts[5]), float(parts[6])]),
                camera_position=np.array([float(parts[7]), float(parts[8]), float(parts[9])]),
                model_id=int(parts[1]),
                score=float(parts[2]),
                state=bool(int(parts[3])),
                frame_index=int(parts[0])))
    return out
