"""Nonlinear least-squares pose refinement over the directional chamfer cost.

Three residual flavors share one damped Gauss-Newton loop:

* D2CO     - distance tensor sampled at a few points per edge (endpoints and
             midpoint by default),
* D2CO_E   - distance tensor sampled at every pixel step of every edge,
* D2CO_IT  - integral tensor, one O(1) span evaluation per edge.

Jacobians are central finite differences of the residual vector with respect
to a twist increment composed onto the pose (the tensors are only defined at
discrete raster points, so analytic gradients are not available).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import tensor, visibility
from .errors import InvalidArgumentError
from .mesh import TriMesh
from .se3 import CameraIntrinsics, Pose, Twist, exp_map
from .tensor import Dt3Tensor, Idt3Tensor


class RefineMethod(Enum):
    D2CO = "d2co"
    D2CO_E = "d2co-e"
    D2CO_IT = "d2co-it"


@dataclass(frozen=True)
class ChamferTensors:
    """Smoothed distance tensor plus its integral form for one image."""

    dt3: Dt3Tensor
    idt3: Idt3Tensor


def build_chamfer_tensors(segments, width: int, height: int,
                          n_orient: int = tensor.DEFAULT_N_ORIENT,
                          lambda_theta: float = tensor.DEFAULT_LAMBDA_THETA,
                          sigma_bins: float = 1.0,
                          line_scale: int = tensor.DEFAULT_LINE_SCALE) -> ChamferTensors:
    dt3 = tensor.build_dt3(segments, width, height, n_orient, lambda_theta)
    smoothed = tensor.smooth_dt3(dt3, sigma_bins)
    return ChamferTensors(smoothed, tensor.build_idt3(smoothed, line_scale))


@dataclass(frozen=True)
class RefineOptions:
    max_iterations: int = 100
    gradient_tolerance: float = 1e-8
    step_tolerance: float = 1e-10
    finite_difference_step: float = 1e-4
    damping_init: float = 1e-3
    subdivision_fraction: float = 0.25
    point_samples: int = 3          # D2CO sampling density per edge
    reextract_rotation: float = 0.05  # rad in one accepted step
    max_step: float = 0.05           # trust region on the twist increment;
    # the smoothing floor makes residuals irreducible, so a raw Gauss-Newton
    # step chases it and overshoots into neighboring basins
    sharp_threshold: float = visibility.DEFAULT_SHARP_COS
    sample_step: float = 2.0        # px, occlusion sampling

    def __post_init__(self):
        for name in ("max_iterations", "gradient_tolerance", "step_tolerance",
                     "finite_difference_step", "damping_init",
                     "subdivision_fraction", "point_samples"):
            if getattr(self, name) <= 0:
                raise InvalidArgumentError(f"{name} must be positive")


@dataclass(frozen=True)
class RefineResult:
    pose: Pose
    cost: float
    iterations: int
    converged: bool
    truncated_edges: int
    residual_count: int


def _project_endpoints(pose: Pose, cam: CameraIntrinsics,
                       a3: np.ndarray, b3: np.ndarray):
    """Project both endpoint sets; view depths are floored at 1e-6 m so the
    tiny finite-difference probes can never flip an edge behind the camera."""
    pa = pose.apply(a3)
    pb = pose.apply(b3)
    za = np.maximum(pa[:, 2], 1e-6)
    zb = np.maximum(pb[:, 2], 1e-6)
    ua = np.stack([cam.focal_x * pa[:, 0] / za + cam.principal_x,
                   cam.focal_y * pa[:, 1] / za + cam.principal_y], axis=1)
    ub = np.stack([cam.focal_x * pb[:, 0] / zb + cam.principal_x,
                   cam.focal_y * pb[:, 1] / zb + cam.principal_y], axis=1)
    return ua, ub


def _eval_edges(ua: np.ndarray, ub: np.ndarray, tensors: ChamferTensors,
                method: RefineMethod, point_samples: int):
    if method is RefineMethod.D2CO_IT:
        return tensor.edge_distance_idt3_batch(tensors.idt3, ua, ub)
    if method is RefineMethod.D2CO_E:
        return tensor.edge_distance_direct_batch(tensors.dt3, ua, ub)
    # D2CO: a few point samples per edge, averaged
    k = point_samples
    t = np.linspace(0.0, 1.0, k)
    pts = ua[:, None, :] + t[None, :, None] * (ub - ua)[:, None, :]
    d = ub - ua
    theta = np.arctan2(d[:, 1], d[:, 0]) % math.pi
    vals, trunc = tensor.sample_dt3_points(
        tensors.dt3, pts.reshape(-1, 2), np.repeat(theta, k))
    return vals.reshape(-1, k).mean(axis=1), trunc.reshape(-1, k).any(axis=1)


def residuals(pose: Pose, model_edges, cam: CameraIntrinsics,
              tensors: ChamferTensors, method: RefineMethod,
              point_samples: int = 3):
    """Per-edge chamfer residuals for a set of visible, subdivided edges.

    ``model_edges`` is a list of Edge3D or an (a3, b3) array pair in model
    coordinates. Edges behind the camera or projecting below 1e-3 px are
    skipped. Returns (residuals, truncated_count, skipped_count).
    """
    if isinstance(model_edges, tuple):
        a3, b3 = model_edges
    else:
        a3 = np.array([e.point_a for e in model_edges], dtype=float).reshape(-1, 3)
        b3 = np.array([e.point_b for e in model_edges], dtype=float).reshape(-1, 3)
    if len(a3) == 0:
        return np.zeros(0), 0, 0
    za = pose.apply(a3)[:, 2]
    zb = pose.apply(b3)[:, 2]
    keep = (za > 1e-9) & (zb > 1e-9)
    ua, ub = _project_endpoints(pose, cam, a3[keep], b3[keep])
    lengths = np.hypot(*(ub - ua).T)
    ok = lengths > 1e-3
    vals, trunc = _eval_edges(ua[ok], ub[ok], tensors, method, point_samples)
    skipped = int((~keep).sum() + (~ok).sum())
    return vals, int(trunc.sum()), skipped


class _EdgeSet:
    """Visible subdivided edges frozen between re-extractions, so residual
    vectors keep a stable dimension across LM steps."""

    def __init__(self, mesh: TriMesh, pose: Pose, cam: CameraIntrinsics,
                 options: RefineOptions):
        prominent = visibility.extract_prominent_edges(mesh, pose, options.sharp_threshold)
        buf = visibility.rasterize_depth(mesh, pose, cam)
        vis = visibility.clip_visible(prominent, buf, pose, cam, options.sample_step)
        sub = visibility.subdivide(vis, options.subdivision_fraction)
        self.a3 = np.array([e.point_a for e in sub], dtype=float).reshape(-1, 3)
        self.b3 = np.array([e.point_b for e in sub], dtype=float).reshape(-1, 3)
        # freeze the in-front, non-degenerate subset at the extraction pose
        if len(self.a3):
            za = pose.apply(self.a3)[:, 2]
            zb = pose.apply(self.b3)[:, 2]
            keep = (za > 1e-9) & (zb > 1e-9)
            ua, ub = _project_endpoints(pose, cam, self.a3, self.b3)
            keep &= np.hypot(*(ub - ua).T) > 0.5
            self.a3 = self.a3[keep]
            self.b3 = self.b3[keep]

    def __len__(self):
        return len(self.a3)

    def evaluate(self, pose, cam, tensors, method, point_samples):
        ua, ub = _project_endpoints(pose, cam, self.a3, self.b3)
        vals, trunc = _eval_edges(ua, ub, tensors, method, point_samples)
        # border-clamped tensor reads would otherwise make out-of-frame poses
        # look cheap; charge each edge the distance its midpoint sits outside
        mid = 0.5 * (ua + ub)
        over_x = np.maximum(np.maximum(-mid[:, 0], mid[:, 0] - (cam.width - 1)), 0.0)
        over_y = np.maximum(np.maximum(-mid[:, 1], mid[:, 1] - (cam.height - 1)), 0.0)
        return vals + np.hypot(over_x, over_y), trunc


def _lm_epoch(pose: Pose, edges: _EdgeSet, cam, tensors, method,
              options: RefineOptions, budget: int):
    """Damped Gauss-Newton over one frozen edge set.

    The cost surface is piecewise linear (bilinear tensor cells, V-shaped
    distance valleys), so when every damped step is rejected a direct search
    over the signed twist axes (with Hooke-Jeeves pattern moves) takes over;
    if no probe direction improves down to the smallest scale, the point is a
    certified local minimum.
    """
    h = options.finite_difference_step
    mu = options.damping_init

    def eval_cost(p):
        r, trunc = edges.evaluate(p, cam, tensors, method, options.point_samples)
        return r, 0.5 * float(r @ r), trunc

    def pattern_descent(pose, r, cost, trunc, grad):
        directions = [np.eye(6)[i] * s for i in range(6) for s in (1.0, -1.0)]
        gnorm = np.linalg.norm(grad)
        if gnorm > 0:
            directions.append(-grad / gnorm)
        moved = False
        scale = 0.01
        while scale >= 1e-6:
            improved_at_scale = False
            sweeping = True
            while sweeping:
                sweeping = False
                base = pose
                for d in directions:
                    cand = pose.compose(exp_map(Twist.from_vector(d * scale)))
                    cr, cc, ct = eval_cost(cand)
                    if cc < cost:
                        pose, r, cost, trunc = cand, cr, cc, ct
                        sweeping = True
                        improved_at_scale = True
                        moved = True
                if sweeping:
                    # pattern move: repeat the net shift of the whole sweep
                    net = log_map(base.inverse().compose(pose)).as_vector()
                    while True:
                        cand = pose.compose(exp_map(Twist.from_vector(net)))
                        cr, cc, ct = eval_cost(cand)
                        if cc < cost:
                            pose, r, cost, trunc = cand, cr, cc, ct
                        else:
                            break
            if improved_at_scale:
                break
            scale *= 0.25
        return pose, r, cost, trunc, moved

    r, cost, trunc = eval_cost(pose)
    converged = False
    iterations = 0
    rotation_total = 0.0
    for _ in range(budget):
        iterations += 1
        jac = np.empty((len(r), 6))
        for i in range(6):
            delta = np.zeros(6)
            delta[i] = h
            rp, _ = edges.evaluate(pose.compose(exp_map(Twist.from_vector(delta))),
                                   cam, tensors, method, options.point_samples)
            rm, _ = edges.evaluate(pose.compose(exp_map(Twist.from_vector(-delta))),
                                   cam, tensors, method, options.point_samples)
            jac[:, i] = (rp - rm) / (2.0 * h)
        grad = jac.T @ r
        if np.abs(grad).max() <= options.gradient_tolerance:
            converged = True
            break
        jtj = jac.T @ jac
        accepted = False
        for _try in range(8):
            try:
                step = -np.linalg.solve(jtj + mu * np.eye(6), grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(jtj + mu * np.eye(6), grad, rcond=None)[0]
            norm = float(np.linalg.norm(step))
            if norm > options.max_step:
                step *= options.max_step / norm
            cand_pose = pose.compose(exp_map(Twist.from_vector(step)))
            cand_r, cand_cost, cand_trunc = eval_cost(cand_pose)
            if cand_cost < cost:
                pose, r, cost, trunc = cand_pose, cand_r, cand_cost, cand_trunc
                rotation_total += float(np.linalg.norm(step[3:]))
                mu = max(mu / 3.0, 1e-12)
                accepted = True
                break
            mu *= 10.0
        if not accepted:
            pose, r, cost, trunc, moved = pattern_descent(pose, r, cost, trunc, grad)
            if not moved:
                # no direction improves at any scale: certified local minimum
                converged = True
                break
            mu = max(mu / 10.0, options.damping_init)
            continue
        if np.linalg.norm(step) <= options.step_tolerance:
            converged = True
            break
    return pose, r, cost, trunc, iterations, converged, rotation_total


def refine(init_pose: Pose, mesh: TriMesh, cam: CameraIntrinsics,
           tensors: ChamferTensors, method: RefineMethod = RefineMethod.D2CO_IT,
           options: RefineOptions = RefineOptions()) -> RefineResult:
    """Refinement of a candidate pose against one image's tensors.

    Twist increments compose on the right (body frame), so rotation steps
    pivot the model about its own origin instead of the camera. The visible
    edge set stays frozen while the optimizer runs (stable residual
    dimension); when an optimization epoch accumulates more rotation than
    ``options.reextract_rotation`` the silhouette may have changed, so the
    set is re-extracted at the refined pose and another epoch runs. A new
    epoch that worsens the mean squared residual is rolled back, which keeps
    outcomes comparable across edge-set changes.
    """
    pose = init_pose
    edges = _EdgeSet(mesh, pose, cam, options)
    if len(edges) == 0:
        return RefineResult(pose, math.inf, 0, False, 0, 0)

    iterations = 0
    converged = False
    prev = None  # (pose, r, cost, trunc, mean_sq) at the previous epoch's end
    for _epoch in range(4):
        budget = options.max_iterations - iterations
        if budget <= 0:
            break
        pose, r, cost, trunc, used, converged, rot = _lm_epoch(
            pose, edges, cam, tensors, method, options, budget)
        iterations += used
        mean_sq = cost / max(1, len(r))
        if prev is not None and mean_sq > prev[4]:
            pose, r, cost, trunc, _ = prev  # the re-extracted set made it worse
            break
        prev = (pose, r, cost, trunc, mean_sq)
        if rot <= options.reextract_rotation or not converged:
            break
        new_edges = _EdgeSet(mesh, pose, cam, options)
        if len(new_edges) == 0:
            break
        edges = new_edges

    return RefineResult(pose, cost, iterations, converged, trunc, len(r))


def score(result, sigma_s: float = 2.0) -> float:
    """Map a refinement cost to a score in (0, 1]: exp(-cost / sigma_s).

    Strictly decreasing in the cost; accepts a RefineResult or a bare cost.
    """
    cost = result.cost if hasattr(result, "cost") else float(result)
    if cost < 0:
        raise InvalidArgumentError("cost must be non-negative")
    return math.exp(-cost / sigma_s)
