"""2D line-segment detection on grayscale images.

The reference detector grows regions of pixels with aligned gradient
direction (tolerance tau) seeded in decreasing gradient-magnitude order, then
fits a segment to each region by weighted principal axis. It is deliberately
pluggable: the rest of the pipeline only consumes segment endpoints and
orientations, so any detector honoring the same config can substitute.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .se3 import Segment2D


@dataclass(frozen=True)
class GrayImage:
    """Grayscale raster, intensities in [0, 255]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if p.ndim != 2 or p.size == 0:
            raise InvalidArgumentError("image must be a non-empty 2D raster")
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class DetectorConfig:
    """Detector knobs.

    rho is the minimum usable gradient magnitude (intensity units per pixel),
    tau the angle tolerance in degrees for region growing, min_length the
    shortest segment kept. epsilon is stored for completeness but the
    reference detector does not use it.
    """

    rho: float = 1.83
    tau: float = 22.5
    epsilon: float = 1.0
    min_length: float = 5.0

    def __post_init__(self):
        if not 0.0 < self.tau < 90.0:
            raise InvalidArgumentError("tau must be in (0, 90) degrees")
        if self.min_length < 1.0:
            raise InvalidArgumentError("min_length must be >= 1 px")


def _gradients(pixels: np.ndarray):
    """2x2 finite-difference gradient field at pixel corners (h-1, w-1)."""
    gx = 0.5 * (pixels[:-1, 1:] + pixels[1:, 1:] - pixels[:-1, :-1] - pixels[1:, :-1])
    gy = 0.5 * (pixels[1:, :-1] + pixels[1:, 1:] - pixels[:-1, :-1] - pixels[:-1, 1:])
    return gx, gy, np.hypot(gx, gy)


def detect_segments(image: GrayImage, config: DetectorConfig = DetectorConfig()) -> list[Segment2D]:
    """Deterministic gradient-direction region growing, one segment per region.

    Intensity offsets do not change the output (pure gradient input); a blank
    image yields an empty list.
    """
    gx, gy, mag = _gradients(image.pixels)
    h, w = mag.shape
    usable = mag >= config.rho
    if not usable.any():
        return []
    angle = np.arctan2(gy, gx)
    tau = math.radians(config.tau)
    used = ~usable  # unusable pixels are never visited

    flat_order = np.argsort(-mag, axis=None, kind="stable")
    segments = []
    for flat in flat_order:
        sy, sx = divmod(int(flat), w)
        if used[sy, sx]:
            continue
        # grow a region of pixels whose gradient direction stays within tau
        # of the region's running mean direction (circular mean via vectors)
        region = [(sy, sx)]
        used[sy, sx] = True
        sum_x = math.cos(angle[sy, sx])
        sum_y = math.sin(angle[sy, sx])
        queue = deque(region)
        while queue:
            cy, cx = queue.popleft()
            mean_ang = math.atan2(sum_y, sum_x)
            for ny in (cy - 1, cy, cy + 1):
                for nx in (cx - 1, cx, cx + 1):
                    if 0 <= ny < h and 0 <= nx < w and not used[ny, nx]:
                        diff = abs((angle[ny, nx] - mean_ang + math.pi) % (2 * math.pi) - math.pi)
                        if diff <= tau:
                            used[ny, nx] = True
                            region.append((ny, nx))
                            queue.append((ny, nx))
                            sum_x += math.cos(angle[ny, nx])
                            sum_y += math.sin(angle[ny, nx])
        if len(region) < 3:
            continue
        seg = _region_to_segment(region, mag)
        if seg is not None and seg.length >= config.min_length:
            segments.append(seg)
    return segments


def _region_to_segment(region, mag) -> Segment2D | None:
    """Weighted principal-axis fit; endpoints are the extreme projections."""
    pts = np.array(region, dtype=float)  # (n, 2) as (y, x)
    wgt = mag[pts[:, 0].astype(np.int64), pts[:, 1].astype(np.int64)]
    total = wgt.sum()
    # gradient field lives at pixel corners: +0.5 centers it on the image grid
    xy = np.stack([pts[:, 1] + 0.5, pts[:, 0] + 0.5], axis=1)
    center = (xy * wgt[:, None]).sum(axis=0) / total
    d = xy - center
    cov = (d * wgt[:, None]).T @ d / total
    evals, evecs = np.linalg.eigh(cov)
    axis = evecs[:, np.argmax(evals)]
    proj = d @ axis
    lo, hi = proj.min(), proj.max()
    if hi - lo < 1e-9:
        return None
    return Segment2D(center + lo * axis, center + hi * axis)


def rotate_image_ccw(image: GrayImage) -> GrayImage:
    """90-degree counterclockwise rotation (test helper for equivariance)."""
    return GrayImage(np.rot90(image.pixels).copy())


def downscale_half(image: GrayImage) -> GrayImage:
    """One 2:1 Gaussian-pyramid step (blur then decimate). Off by default in
    the pipeline; provided for large input images."""
    k = np.array([1.0, 4.0, 6.0, 4.0, 1.0])
    k /= k.sum()
    p = image.pixels
    p = np.apply_along_axis(lambda r: np.convolve(np.pad(r, 2, mode="edge"), k, "valid"), 1, p)
    p = np.apply_along_axis(lambda c: np.convolve(np.pad(c, 2, mode="edge"), k, "valid"), 0, p)
    return GrayImage(p[::2, ::2].copy())


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def load_pgm(path) -> GrayImage:
    """Binary 8-bit portable graymap (P5) reader."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise InvalidArgumentError(f"{path}: not a binary PGM (P5) file")
    # header: magic, width, height, maxval, separated by whitespace/comments
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval > 255:
        raise InvalidArgumentError(f"{path}: only 8-bit graymaps supported")
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return GrayImage(raster.reshape(height, width).astype(np.float64))


def save_pgm(image: GrayImage, path) -> None:
    with open(path, "wb") as f:
        f.write(f"P5\n{image.width} {image.height}\n255\n".encode())
        f.write(np.clip(image.pixels, 0, 255).astype(np.uint8).tobytes())


def save_segments_csv(segments, path) -> None:
    """Serialize segments as x1,y1,x2,y2 rows."""
    with open(path, "w") as f:
        f.write("x1,y1,x2,y2\n")
        for s in segments:
            f.write(f"{s.end_a[0]:.6f},{s.end_a[1]:.6f},{s.end_b[0]:.6f},{s.end_b[1]:.6f}\n")


def load_segments_csv(path) -> list[Segment2D]:
    out = []
    with open(path) as f:
        header = f.readline()
        if header.strip() != "x1,y1,x2,y2":
            raise InvalidArgumentError(f"{path}: unexpected header {header.strip()!r}")
        for ln in f:
            if not ln.strip():
                continue
            x1, y1, x2, y2 = (float(t) for t in ln.split(","))
            out.append(Segment2D(np.array([x1, y1]), np.array([x2, y2])))
    return out
