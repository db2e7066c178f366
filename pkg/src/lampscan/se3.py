"""Rigid-body poses, SE(3) exp/log maps and pinhole projection.

Poses are stored as a rotation matrix plus translation vector; the 6-vector
twist form (translation, axis-angle rotation) is used as the optimization
variable. Conversion between the two uses the genuine SE(3) exponential /
logarithm (Rodrigues rotation plus the left-Jacobian coupling of translation
and rotation), so ``exp(xi) @ exp(-xi)`` is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousRotationError, BehindCameraError, InvalidArgumentError

# Below this rotation magnitude the Taylor branches of exp/log are used to
# avoid dividing by ||omega||.
SMALL_ANGLE = 1e-8


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Twist:
    """6-vector Lie-algebra pose: translation (m) then axis-angle rotation (rad)."""

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation", _frozen(_as_vec3(self.translation)))
        object.__setattr__(self, "rotation", _frozen(_as_vec3(self.rotation)))
        if not (np.isfinite(self.translation).all() and np.isfinite(self.rotation).all()):
            raise InvalidArgumentError("twist components must be finite")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.translation, self.rotation])

    @staticmethod
    def from_vector(v) -> "Twist":
        v = np.asarray(v, dtype=float).reshape(6)
        return Twist(v[:3], v[3:])

    def __neg__(self) -> "Twist":
        return Twist(-self.translation, -self.rotation)


@dataclass(frozen=True)
class Pose:
    """Rigid transform: x_out = rotation @ x_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.ascontiguousarray(np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(_as_vec3(self.translation)))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def validate(self, tol: float = 1e-9) -> None:
        r = self.rotation
        if np.abs(r.T @ r - np.eye(3)).max() > tol:
            raise InvalidArgumentError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > tol:
            raise InvalidArgumentError("rotation determinant is not +1")

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other: (self*other)(x) = self(other(x))."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def apply(self, points) -> np.ndarray:
        """Transform one point (3,) or a stack of points (N, 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera parameters, all in pixels."""

    focal_x: float
    focal_y: float
    principal_x: float
    principal_y: float
    width: int
    height: int

    def __post_init__(self):
        if self.focal_x <= 0 or self.focal_y <= 0:
            raise InvalidArgumentError("focal lengths must be positive")
        if not (0 <= self.principal_x <= self.width and 0 <= self.principal_y <= self.height):
            raise InvalidArgumentError("principal point outside image bounds")


@dataclass(frozen=True)
class Segment2D:
    """2D line segment in pixel coordinates with orientation folded into [0, pi)."""

    end_a: np.ndarray
    end_b: np.ndarray
    orientation: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        a = _frozen(np.asarray(self.end_a, dtype=float).reshape(2))
        b = _frozen(np.asarray(self.end_b, dtype=float).reshape(2))
        object.__setattr__(self, "end_a", a)
        object.__setattr__(self, "end_b", b)
        if self.orientation is None:
            object.__setattr__(self, "orientation", segment_orientation(a, b))

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end_b - self.end_a))


def segment_orientation(a, b) -> float:
    """Orientation of b - a folded into [0, pi)."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    theta = math.atan2(d[1], d[0]) % math.pi
    if theta >= math.pi:  # fold atan2(+0.0, -1.0) == pi
        theta -= math.pi
    return theta


def _hat(w: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def exp_map(twist: Twist) -> Pose:
    """SE(3) exponential of a twist.

    Uses Rodrigues' formula for the rotation and the left Jacobian for the
    translation; below SMALL_ANGLE both fall back to their Taylor expansions.
    """
    w = twist.rotation
    v = twist.translation
    theta = float(np.linalg.norm(w))
    s = _hat(w)
    s2 = s @ s
    if theta < SMALL_ANGLE:
        rot = np.eye(3) + s + 0.5 * s2
        jac = np.eye(3) + 0.5 * s + s2 / 6.0
    else:
        t2 = theta * theta
        rot = np.eye(3) + s * (math.sin(theta) / theta) + s2 * ((1.0 - math.cos(theta)) / t2)
        jac = (np.eye(3)
               + s * ((1.0 - math.cos(theta)) / t2)
               + s2 * ((theta - math.sin(theta)) / (t2 * theta)))
    return Pose(rot, jac @ v)


def log_map(pose: Pose) -> Twist:
    """Inverse of :func:`exp_map`. Raises for rotations within 1e-6 of pi."""
    r = pose.rotation
    cos_theta = min(1.0, max(-1.0, (np.trace(r) - 1.0) / 2.0))
    theta = math.acos(cos_theta)
    if theta >= math.pi - 1e-6:
        raise AmbiguousRotationError(f"rotation angle {theta:.9f} too close to pi")
    if theta < SMALL_ANGLE:
        w = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]) / 2.0
        s = _hat(w)
        jac_inv = np.eye(3) - 0.5 * s + (s @ s) / 12.0
    else:
        w = theta / (2.0 * math.sin(theta)) * np.array(
            [r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
        s = _hat(w)
        t2 = theta * theta
        jac_inv = (np.eye(3) - 0.5 * s
                   + (s @ s) * (1.0 / t2 - (1.0 + math.cos(theta)) / (2.0 * theta * math.sin(theta))))
    return Twist(jac_inv @ pose.translation, w)


def project_point(pose: Pose, cam: CameraIntrinsics, point) -> np.ndarray:
    """Pinhole projection of a 3D point transformed by pose, in pixels."""
    p = pose.apply(_as_vec3(point))
    if p[2] <= 1e-9:
        raise BehindCameraError(f"point depth {p[2]:.3g} m is not positive")
    return np.array([cam.focal_x * p[0] / p[2] + cam.principal_x,
                     cam.focal_y * p[1] / p[2] + cam.principal_y])


def project_points(pose: Pose, cam: CameraIntrinsics, points: np.ndarray):
    """Vectorized projection.

    Returns (uv, depth) where uv is (N, 2); entries with depth <= 1e-9 are
    left NaN for the caller to clip.
    """
    p = pose.apply(points)
    z = p[:, 2]
    ok = z > 1e-9
    uv = np.full((len(p), 2), np.nan)
    uv[ok, 0] = cam.focal_x * p[ok, 0] / z[ok] + cam.principal_x
    uv[ok, 1] = cam.focal_y * p[ok, 1] / z[ok] + cam.principal_y
    return uv, z


def project_edge(pose: Pose, cam: CameraIntrinsics, edge) -> Segment2D:
    """Project a 3D edge endpoint-wise. Both endpoints must be in front.

    ``edge`` is anything with point_a/point_b attributes (an Edge3D) or a
    plain (point_a, point_b) pair.
    """
    pa, pb = (edge.point_a, edge.point_b) if hasattr(edge, "point_a") else edge
    a = project_point(pose, cam, pa)
    b = project_point(pose, cam, pb)
    return Segment2D(a, b)
