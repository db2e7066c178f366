"""Synthetic scene generation: a room with a ceiling-mounted lamp grid, a
camera trajectory looking up, and noisy segment renderings of each frame.

Scenes stand in for real captures: lamps are parametric solids (boxes for the
rectangular models, an extruded 32-gon for the circular one), the ceiling is
emitted as a building surface, and every randomized quantity draws from
streams derived from the scene seed, so a repeated run is byte-identical.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import visibility
from .bim import BimSurface, SurfaceType
from .errors import ConfigError
from .mesh import TriMesh, make_box, make_prism
from .se3 import CameraIntrinsics, Pose, Segment2D, Twist, exp_map

# Lamp model catalog: footprint/height in meters. Models 1-4 are rectangular
# with distinct aspect ratios; model 5 is circular.
LAMP_MODELS = {
    1: ("box", (1.20, 0.30, 0.08)),
    2: ("box", (0.60, 0.60, 0.10)),
    3: ("box", (1.20, 0.15, 0.05)),
    4: ("box", (0.30, 0.30, 0.12)),
    5: ("prism", (0.22, 0.06, 32)),
}


def lamp_mesh(model_id: int) -> TriMesh:
    if model_id not in LAMP_MODELS:
        raise ConfigError(f"unknown lamp model {model_id}")
    kind, dims = LAMP_MODELS[model_id]
    if kind == "box":
        return make_box(*dims)
    radius, height, sides = dims
    return make_prism(radius, height, sides)


@dataclass(frozen=True)
class NoiseConfig:
    endpoint_sigma: float = 0.0       # px
    orientation_sigma: float = 0.0    # rad
    clutter: int = 0                  # extra random segments per frame
    dropout: float = 0.0              # probability a segment is dropped
    detection_depth_sigma: float = 0.0  # m along the camera ray
    state_flip_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.dropout <= 1.0 or not 0.0 <= self.state_flip_prob <= 1.0:
            raise ConfigError("probabilities must be in [0, 1]")
        if min(self.endpoint_sigma, self.orientation_sigma,
               self.detection_depth_sigma) < 0:
            raise ConfigError("noise sigmas must be >= 0")


@dataclass(frozen=True)
class SceneConfig:
    room: tuple = (6.0, 5.0, 3.0)          # width, depth, ceiling height (m)
    models: tuple = (1, 2)                 # lamp models placed on the grid
    grid: tuple = (2, 2)                   # lamps in x, y
    hanging_offset: float = 0.5            # m below ceiling (0 = embedded)
    off_fraction: float = 0.25             # fraction of lamps switched off
    cam_width: int = 320
    cam_height: int = 240
    focal: float = 300.0
    waypoints: tuple = ((1.5, 1.5, 0.0), (4.5, 1.5, 0.0), (4.5, 3.5, 0.0))
    frames_per_leg: int = 3
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    init_rotation_deg: float = 3.0         # candidate perturbation bounds
    init_translation_m: float = 0.05
    min_score: float = 0.1
    cluster_radius: float = 0.5
    seed: int = 1

    @property
    def n_frames(self) -> int:
        return max(0, (len(self.waypoints) - 1) * self.frames_per_leg)

    def camera(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.focal, self.focal,
                                self.cam_width / 2.0, self.cam_height / 2.0,
                                self.cam_width, self.cam_height)


def _parse_floats(text: str):
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def load_config(path) -> SceneConfig:
    """Flat key-value config with section headers (INI)."""
    parser = configparser.ConfigParser()
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    if not read:
        raise ConfigError(f"config file not found: {path}")
    cfg = SceneConfig()
    try:
        if parser.has_section("room"):
            s = parser["room"]
            cfg = replace(cfg, room=(s.getfloat("width", cfg.room[0]),
                                     s.getfloat("depth", cfg.room[1]),
                                     s.getfloat("height", cfg.room[2])))
        if parser.has_section("lamps"):
            s = parser["lamps"]
            models = cfg.models
            if "models" in s:
                models = tuple(int(t) for t in s["models"].split(",") if t.strip())
            grid = cfg.grid
            if "grid" in s:
                gx, gy = s["grid"].lower().split("x")
                grid = (int(gx), int(gy))
            cfg = replace(cfg, models=models, grid=grid,
                          hanging_offset=s.getfloat("hanging_offset", cfg.hanging_offset),
                          off_fraction=s.getfloat("off_fraction", cfg.off_fraction))
        if parser.has_section("camera"):
            s = parser["camera"]
            cfg = replace(cfg, cam_width=s.getint("width", cfg.cam_width),
                          cam_height=s.getint("height", cfg.cam_height),
                          focal=s.getfloat("focal", cfg.focal))
        if parser.has_section("trajectory"):
            s = parser["trajectory"]
            waypoints = cfg.waypoints
            if "waypoints" in s:
                waypoints = tuple(
                    tuple(float(x) for x in wp.split(","))
                    for wp in s["waypoints"].split(";") if wp.strip())
            cfg = replace(cfg, waypoints=waypoints,
                          frames_per_leg=s.getint("frames_per_leg", cfg.frames_per_leg))
        if parser.has_section("noise"):
            s = parser["noise"]
            cfg = replace(cfg, noise=NoiseConfig(
                endpoint_sigma=s.getfloat("endpoint_sigma", 0.0),
                orientation_sigma=s.getfloat("orientation_sigma", 0.0),
                clutter=s.getint("clutter", 0),
                dropout=s.getfloat("dropout", 0.0),
                detection_depth_sigma=s.getfloat("detection_depth_sigma", 0.0),
                state_flip_prob=s.getfloat("state_flip_prob", 0.0)))
        if parser.has_section("init"):
            s = parser["init"]
            cfg = replace(cfg, init_rotation_deg=s.getfloat("rotation_deg", cfg.init_rotation_deg),
                          init_translation_m=s.getfloat("translation_m", cfg.init_translation_m))
        if parser.has_section("run"):
            s = parser["run"]
            cfg = replace(cfg, seed=s.getint("seed", cfg.seed),
                          min_score=s.getfloat("min_score", cfg.min_score),
                          cluster_radius=s.getfloat("cluster_radius", cfg.cluster_radius))
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    return cfg


@dataclass(frozen=True)
class LampInstance:
    model_id: int
    pose_world: Pose      # lamp local frame -> world
    state: bool
    reference: np.ndarray  # lamp center, world (meters)


@dataclass(frozen=True)
class Scene:
    config: SceneConfig
    lamps: tuple
    surfaces: tuple            # BimSurface, at least the ceiling
    camera_poses: tuple        # per frame, camera-to-world
    cam: CameraIntrinsics

    def references(self):
        return [(l.reference, l.model_id, l.state) for l in self.lamps]


def _camera_to_world(position) -> Pose:
    # camera looks straight up: view axis +z(world), image axes along world x/y
    return Pose(np.eye(3), np.asarray(position, dtype=float))


def gen_scene(config: SceneConfig) -> Scene:
    """Deterministic scene from a config (same seed, same scene)."""
    rng = np.random.default_rng([config.seed, 1031])
    w, d, h = config.room
    nx, ny = config.grid
    n_lamps = nx * ny
    margin_x = w / (nx + 1)
    margin_y = d / (ny + 1)
    lamps = []
    n_off = int(round(config.off_fraction * n_lamps))
    off_ids = set(rng.choice(n_lamps, size=n_off, replace=False).tolist()) if n_off else set()
    for j in range(ny):
        for i in range(nx):
            idx = j * nx + i
            model = config.models[idx % len(config.models)]
            center = np.array([margin_x * (i + 1), margin_y * (j + 1),
                               h - config.hanging_offset])
            kind, dims = LAMP_MODELS[model]
            half_w = dims[0] / 2.0
            if not (0 <= center[0] - half_w and center[0] + half_w <= w
                    and 0 <= center[1] - half_w and center[1] + half_w <= d):
                raise ConfigError(f"lamp {idx} does not fit inside the room")
            lamps.append(LampInstance(model, Pose(np.eye(3), center),
                                      idx not in off_ids, center))
    ceiling_poly = np.array([[0.0, 0.0, h], [w, 0.0, h], [w, d, h], [0.0, d, h]])
    ceiling = BimSurface("ceiling-0", SurfaceType.CEILING, ceiling_poly,
                         np.array([0.0, 0.0, 1.0]), h)
    floor = BimSurface("floor-0", SurfaceType.FLOOR,
                       np.array([[0.0, 0.0, 0.0], [0.0, d, 0.0], [w, d, 0.0], [w, 0.0, 0.0]]),
                       np.array([0.0, 0.0, -1.0]), 0.0)
    cam_poses = []
    wps = [np.asarray(p, dtype=float) for p in config.waypoints]
    for leg in range(len(wps) - 1):
        for k in range(config.frames_per_leg):
            t = k / config.frames_per_leg
            cam_poses.append(_camera_to_world(wps[leg] + t * (wps[leg + 1] - wps[leg])))
    return Scene(config, tuple(lamps), (ceiling, floor), tuple(cam_poses),
                 config.camera())


@dataclass(frozen=True)
class FrameData:
    frame_index: int
    segments: tuple              # Segment2D
    camera_pose: Pose            # camera-to-world
    lamp_poses: dict             # lamp index -> model-to-camera Pose
    visible_lamps: tuple         # lamp indices with usable projections


def _frame_rng(config: SceneConfig, frame_index: int, stream: int):
    return np.random.default_rng([config.seed, 7919, frame_index, stream])


def render_synthetic_frame(scene: Scene, frame_index: int) -> FrameData:
    """Project visible lamp edges into segments, then apply the configured
    endpoint/orientation noise, dropout and clutter. Deterministic per
    (seed, frame)."""
    cfg = scene.config
    cam = scene.cam
    c2w = scene.camera_poses[frame_index]
    w2c = c2w.inverse()

    lamp_poses = {}
    meshes = {}
    # combined depth over all lamps handles inter-lamp occlusion
    depth = np.full((cam.height, cam.width), np.inf)
    for li, lamp in enumerate(scene.lamps):
        pose_cam = w2c.compose(lamp.pose_world)
        lamp_poses[li] = pose_cam
        meshes[li] = lamp_mesh(lamp.model_id)
        visibility.rasterize_into(depth, meshes[li], pose_cam, cam)
    buf = visibility.DepthBuffer(cam.width, cam.height, depth)

    segments = []
    visible = []
    for li, lamp in enumerate(scene.lamps):
        pose_cam = lamp_poses[li]
        center_cam = pose_cam.translation
        if center_cam[2] <= 0.3:
            continue
        u = cam.focal_x * center_cam[0] / center_cam[2] + cam.principal_x
        v = cam.focal_y * center_cam[1] / center_cam[2] + cam.principal_y
        if not (0 <= u < cam.width and 0 <= v < cam.height):
            continue
        prominent = visibility.extract_prominent_edges(meshes[li], pose_cam)
        vis = visibility.clip_visible(prominent, buf, pose_cam, cam)
        if not vis:
            continue
        visible.append(li)
        for e in vis:
            a = pose_cam.apply(e.point_a)
            b = pose_cam.apply(e.point_b)
            pa = np.array([cam.focal_x * a[0] / a[2] + cam.principal_x,
                           cam.focal_y * a[1] / a[2] + cam.principal_y])
            pb = np.array([cam.focal_x * b[0] / b[2] + cam.principal_x,
                           cam.focal_y * b[1] / b[2] + cam.principal_y])
            if np.linalg.norm(pb - pa) >= 1.0:
                segments.append(Segment2D(pa, pb))

    noise = cfg.noise
    rng = _frame_rng(cfg, frame_index, 0)
    out = []
    for s in segments:
        if noise.dropout > 0 and rng.random() < noise.dropout:
            continue
        a, b = s.end_a.copy(), s.end_b.copy()
        if noise.endpoint_sigma > 0:
            a = a + rng.normal(0.0, noise.endpoint_sigma, 2)
            b = b + rng.normal(0.0, noise.endpoint_sigma, 2)
        if noise.orientation_sigma > 0:
            ang = rng.normal(0.0, noise.orientation_sigma)
            c, sn = math.cos(ang), math.sin(ang)
            rot = np.array([[c, -sn], [sn, c]])
            mid = 0.5 * (a + b)
            a = mid + rot @ (a - mid)
            b = mid + rot @ (b - mid)
        if np.linalg.norm(b - a) >= 1.0:
            out.append(Segment2D(a, b))
    for _ in range(noise.clutter):
        c = rng.uniform([0, 0], [cam.width - 1, cam.height - 1])
        ang = rng.uniform(0, math.pi)
        half = rng.uniform(5.0, 30.0)
        d = np.array([math.cos(ang), math.sin(ang)]) * half
        out.append(Segment2D(c - d, c + d))

    return FrameData(frame_index, tuple(out), c2w, lamp_poses, tuple(visible))


def perturbed_init(scene: Scene, frame_index: int, lamp_index: int) -> Pose:
    """Candidate initialization: ground truth disturbed within the configured
    rotation/translation bounds (substitute for a candidate generator)."""
    cfg = scene.config
    rng = _frame_rng(cfg, frame_index, 100 + lamp_index)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    ang = math.radians(cfg.init_rotation_deg) * rng.uniform(0.3, 1.0)
    t_dir = rng.normal(size=3)
    t_dir /= np.linalg.norm(t_dir)
    t_mag = cfg.init_translation_m * rng.uniform(0.3, 1.0)
    disturb = exp_map(Twist(t_dir * t_mag, axis * ang))
    w2c = scene.camera_poses[frame_index].inverse()
    gt = w2c.compose(scene.lamps[lamp_index].pose_world)
    return disturb.compose(gt)
