"""Pure-numpy implementations of the hot kernels.

These mirror the compiled extension in ``_kernels.pyx``; ``kernels.py`` picks
one lane at import time. Everything is batch-oriented so Python call overhead
amortizes across edges and samples (the refiner evaluates whole edge sets per
residual call).

Integral-raster layout
----------------------
Each orientation slice is stored in a canonical frame where integration
advances along columns and the integration lines climb by a slope
``d_s in [0, 1]`` in the row direction (slices whose direction has a negative
x component are mirrored in x first; slices steeper than 45 degrees are
transposed). The cell ``(row, col)`` belongs to the line
``l = row - floor(col * d_s)`` and stores the exclusive running sum

    I[row, col] = sum_{k < col} f(k, l + k*d_s) / d_p

where ``f`` linearly interpolates the distance slice between the two rows
bracketing the line's true position and ``1/d_p`` is the arc length advanced
per column, so a span difference divided by the edge length is the mean
distance along the edge.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


# ---------------------------------------------------------------------------
# DT3 construction helpers
# ---------------------------------------------------------------------------

def orientation_recursion(values: np.ndarray, step_penalty: float) -> None:
    """Circular forward+backward min-recursion across orientation bins.

    ``values`` is (n_orient, H, W), modified in place:
    v[i] <- min(v[i], v[j] + step_penalty * circular_bin_distance(i, j)).
    Two wrapped sweeps reach the fixpoint.
    """
    n = values.shape[0]
    for k in range(1, 2 * n):
        np.minimum(values[k % n], values[(k - 1) % n] + step_penalty, out=values[k % n])
    for k in range(2 * n - 2, -1, -1):
        np.minimum(values[k % n], values[(k + 1) % n] + step_penalty, out=values[k % n])


INTEGRAL_SUBSTEPS = 4


def build_integral_slice(canon: np.ndarray, d_s: float, inv_dp: float,
                         line_scale: int = 1) -> np.ndarray:
    """Line-integral raster of one canonical orientation slice.

    Integration lines run at slope ``d_s`` (rows per column) with intercepts
    spaced ``1/line_scale`` pixels apart; the returned raster has
    ``line_scale * (rows - 1) + 1`` rows and the cell (row, col) belongs to
    the line ``l = row - floor(col * d_s * line_scale)`` and stores the
    integral of the slice's bilinear interpolant along that line from its
    first in-raster column up to ``col`` (so I[., k] = k*c on a constant
    slice, and a span read divided by its arc length is the mean along the
    span).

    Each unit column interval is integrated by a composite midpoint rule with
    INTEGRAL_SUBSTEPS bilinear samples: a plain running sum of per-column
    values would displace every span read by half a column and miss the
    curvature of the bilinear field along slanted lines. ``line_scale`` > 1
    refines the line pitch, shrinking the cross-line interpolation error of
    span reads near the sharp valleys of the distance field; scale 1
    reproduces the classic one-line-per-row layout.
    """
    rows, cols = canon.shape
    s = INTEGRAL_SUBSTEPS
    m = int(line_scale)
    out_rows = m * (rows - 1) + 1
    col = np.arange(cols)
    shift = np.floor(col * d_s * m).astype(np.int64)

    off = int(shift[-1])
    ext_rows = out_rows + off
    lam = np.arange(ext_rows)[:, None]  # extended line index: line id = lam - off

    # per-interval integral between columns k and k+1, bilinear per substep
    interval = np.zeros((ext_rows, cols - 1)) if cols > 1 else np.zeros((ext_rows, 0))
    k = col[:-1]
    for j in range(s):
        u = (j + 0.5) / s
        t = (k + u) * d_s * m
        cross = (lam - off + t[None, :]) / m  # cross position in pixels
        r0 = np.floor(cross).astype(np.int64)
        fr = cross - r0
        r0c = np.clip(r0, 0, rows - 1)
        r1c = np.clip(r0 + 1, 0, rows - 1)
        va = (1.0 - fr) * canon[r0c, k[None, :]] + fr * canon[r1c, k[None, :]]
        vb = (1.0 - fr) * canon[r0c, (k + 1)[None, :]] + fr * canon[r1c, (k + 1)[None, :]]
        interval += (1.0 - u) * va + u * vb
    interval *= inv_dp / s

    # zero out intervals whose starting cell is outside the raster
    if cols > 1:
        start_row = lam - off + shift[None, :-1]
        interval[(start_row < 0) | (start_row >= out_rows)] = 0.0

    csum = np.empty((ext_rows, cols))
    csum[:, 0] = 0.0
    np.cumsum(interval, axis=1, out=csum[:, 1:])
    out = csum[np.arange(out_rows)[:, None] - shift[None, :] + off, col[None, :]]
    return np.ascontiguousarray(out)


def rasterize_segments(mask: np.ndarray, x0, y0, x1, y1) -> None:
    """Draw 1 px wide line rasters into a boolean mask, in place.

    Endpoints are rounded to the nearest pixel; samples are dense enough to
    leave no gaps (one per unit step of the dominant axis).
    """
    h, w = mask.shape
    for ax, ay, bx, by in zip(np.atleast_1d(x0), np.atleast_1d(y0),
                              np.atleast_1d(x1), np.atleast_1d(y1)):
        ax, ay, bx, by = round(ax), round(ay), round(bx), round(by)
        n = int(max(abs(bx - ax), abs(by - ay))) + 1
        xs = np.rint(np.linspace(ax, bx, n)).astype(np.int64)
        ys = np.rint(np.linspace(ay, by, n)).astype(np.int64)
        keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        mask[ys[keep], xs[keep]] = True


# ---------------------------------------------------------------------------
# Integral-tensor evaluation (edge distance on the integral rasters)
# ---------------------------------------------------------------------------

def eval_pixel_value(flat, offsets, n_rows, n_cols, z, line, pix, d_s):
    """Interpolated read of the integral raster at fractional pixel index.

    ``line`` is integer per element; out-of-raster reads clamp to the border
    and raise the returned truncation flag.
    """
    rows = n_rows[z]
    cols = n_cols[z]
    pa = np.floor(pix)
    dp = pix - pa
    pa = pa.astype(np.int64)
    pb = pa + 1
    pa_c = np.clip(pa, 0, cols - 1)
    pb_c = np.clip(pb, 0, cols - 1)
    ra = line + np.floor(pa_c * d_s).astype(np.int64)
    rb = line + np.floor(pb_c * d_s).astype(np.int64)
    ra_c = np.clip(ra, 0, rows - 1)
    rb_c = np.clip(rb, 0, rows - 1)
    trunc = (pa != pa_c) | (pb != pb_c) | (ra != ra_c) | (rb != rb_c)
    va = flat[offsets[z] + ra_c * cols + pa_c]
    vb = flat[offsets[z] + rb_c * cols + pb_c]
    return va + (vb - va) * dp, trunc


def eval_image_value(flat, offsets, n_rows, n_cols, x_p, x_d, d_p,
                     row_slope, foot_step, line_scale, width,
                     z, cx, cy, r):
    """Span value of an edge (center, half-length) on one orientation slice.

    The center is perpendicular-projected onto the two raster lines bracketing
    its continuous line coordinate; each line's span difference is formed from
    interpolated reads of the running sums and the two are blended linearly.
    ``row_slope`` is the line slope in raster rows per column and
    ``foot_step`` the column shift of the perpendicular foot per line step.
    """
    xd = x_d[z].astype(bool)
    xp = x_p[z].astype(bool)
    slope = row_slope[z]
    step = foot_step[z]
    x = np.where(xp, cx, (width - 1) - cx)
    p = np.where(xd, x, cy)
    cross = np.where(xd, cy, x)
    line = cross * line_scale - p * slope
    la = np.floor(line)
    dl = line - la
    la = la.astype(np.int64)
    lb = la + 1
    pa = p + dl * step  # foot of the center's perpendicular on line la
    pb = pa - step      # same on line lb
    rp = r * d_p[z]
    va1, t1 = eval_pixel_value(flat, offsets, n_rows, n_cols, z, la, pa - rp, slope)
    va2, t2 = eval_pixel_value(flat, offsets, n_rows, n_cols, z, la, pa + rp, slope)
    vb1, t3 = eval_pixel_value(flat, offsets, n_rows, n_cols, z, lb, pb - rp, slope)
    vb2, t4 = eval_pixel_value(flat, offsets, n_rows, n_cols, z, lb, pb + rp, slope)
    da = va2 - va1
    db = vb2 - vb1
    return da + (db - da) * dl, t1 | t2 | t3 | t4


def eval_idt3_batch(flat, offsets, n_rows, n_cols, x_p, x_d, d_p,
                    row_slope, foot_step, line_scale, width,
                    n_orient, ax, ay, bx, by):
    """Mean directional chamfer distance of edges on the integral tensor.

    Edges are given as endpoint arrays; returns (distances, truncated flags).
    Each edge is re-expressed as center/half-length/orientation, evaluated on
    the two orientation slices bracketing its angle and blended.
    """
    dx = bx - ax
    dy = by - ay
    d = np.hypot(dx, dy)
    cx = 0.5 * (ax + bx)
    cy = 0.5 * (ay + by)
    theta = np.arctan2(dy, dx) % math.pi
    theta[theta >= math.pi] -= math.pi
    zf = theta * n_orient / math.pi
    za = np.floor(zf).astype(np.int64)
    dz = zf - za
    za %= n_orient
    zb = (za + 1) % n_orient
    r = 0.5 * d
    va, ta = eval_image_value(flat, offsets, n_rows, n_cols, x_p, x_d, d_p,
                              row_slope, foot_step, line_scale, width,
                              za, cx, cy, r)
    vb, tb = eval_image_value(flat, offsets, n_rows, n_cols, x_p, x_d, d_p,
                              row_slope, foot_step, line_scale, width,
                              zb, cx, cy, r)
    return (va + (vb - va) * dz) / d, ta | tb


# ---------------------------------------------------------------------------
# Direct DT3 evaluation (per-pixel sampling; also the D2CO point sampler)
# ---------------------------------------------------------------------------

def eval_dt3_points(values: np.ndarray, x, y, theta):
    """DT3 read with bilinear spatial and linear circular orientation interp.

    Returns (sampled values, truncation flags); out-of-image coordinates clamp
    to the border.
    """
    n, h, w = values.shape
    flat = values.reshape(-1)
    xa = np.floor(x)
    ya = np.floor(y)
    fx = x - xa
    fy = y - ya
    xa = xa.astype(np.int64)
    ya = ya.astype(np.int64)
    xa_c = np.clip(xa, 0, w - 1)
    xb_c = np.clip(xa + 1, 0, w - 1)
    ya_c = np.clip(ya, 0, h - 1)
    yb_c = np.clip(ya + 1, 0, h - 1)
    trunc = (xa < 0) | (xa + 1 > w - 1) | (ya < 0) | (ya + 1 > h - 1)

    zf = (np.asarray(theta) % math.pi) * n / math.pi
    za = np.floor(zf).astype(np.int64)
    wz = zf - za
    za %= n
    zb = (za + 1) % n

    out = 0.0
    for z, zw in ((za, 1.0 - wz), (zb, wz)):
        base = z * (h * w)
        v00 = flat[base + ya_c * w + xa_c]
        v01 = flat[base + ya_c * w + xb_c]
        v10 = flat[base + yb_c * w + xa_c]
        v11 = flat[base + yb_c * w + xb_c]
        bil = (v00 * (1 - fx) * (1 - fy) + v01 * fx * (1 - fy)
               + v10 * (1 - fx) * fy + v11 * fx * fy)
        out = out + zw * bil
    return out, trunc


def eval_direct_batch(values: np.ndarray, ax, ay, bx, by):
    """Mean DT3 value sampled every pixel step along each exact edge.

    The direct-summation counterpart of :func:`eval_idt3_batch`; costs
    O(length) per edge. Samples sit at sub-interval midpoints so the mean is
    free of endpoint bias on the V-shaped distance field. Returns
    (means, truncation flags).
    """
    ax = np.asarray(ax, dtype=float)
    ay = np.asarray(ay, dtype=float)
    bx = np.asarray(bx, dtype=float)
    by = np.asarray(by, dtype=float)
    d = np.hypot(bx - ax, by - ay)
    counts = np.maximum(1, np.ceil(d).astype(np.int64))
    total = int(counts.sum())
    edge_of = np.repeat(np.arange(len(d)), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    k = np.arange(total) - np.repeat(starts, counts)
    t = (k + 0.5) / np.repeat(counts, counts)
    xs = np.repeat(ax, counts) + t * np.repeat(bx - ax, counts)
    ys = np.repeat(ay, counts) + t * np.repeat(by - ay, counts)
    theta = np.arctan2(by - ay, bx - ax) % math.pi
    vals, trunc = eval_dt3_points(values, xs, ys, np.repeat(theta, counts))
    sums = np.add.reduceat(vals, starts)
    any_trunc = np.zeros(len(d), dtype=bool)
    np.logical_or.at(any_trunc, edge_of, trunc)
    return sums / counts, any_trunc


# ---------------------------------------------------------------------------
# Depth-buffer rasterization
# ---------------------------------------------------------------------------

def rasterize_triangles(depth: np.ndarray, uv: np.ndarray, z: np.ndarray) -> None:
    """Min-depth fill of projected triangles with perspective-correct depth.

    ``uv`` is (T, 3, 2) pixel coordinates, ``z`` (T, 3) view depths (> 0).
    Pixels sample at integer coordinates; zero-area triangles are skipped.
    """
    h, w = depth.shape
    inv_z = 1.0 / z
    for tri in range(uv.shape[0]):
        x0, y0 = uv[tri, 0]
        x1, y1 = uv[tri, 1]
        x2, y2 = uv[tri, 2]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        xmin = max(0, int(math.ceil(min(x0, x1, x2))))
        xmax = min(w - 1, int(math.floor(max(x0, x1, x2))))
        ymin = max(0, int(math.ceil(min(y0, y1, y2))))
        ymax = min(h - 1, int(math.floor(max(y0, y1, y2))))
        if xmin > xmax or ymin > ymax:
            continue
        xs = np.arange(xmin, xmax + 1)
        ys = np.arange(ymin, ymax + 1)
        gx, gy = np.meshgrid(xs, ys)
        w0 = ((x1 - x0) * (gy - y0) - (gx - x0) * (y1 - y0)) / area
        w1 = ((gx - x0) * (y2 - y0) - (x2 - x0) * (gy - y0)) / area
        # barycentric: l1 scales edge 0->1, l2 edge 0->2
        l1 = w1
        l2 = w0
        l0 = 1.0 - l1 - l2
        inside = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
        if not inside.any():
            continue
        zi = 1.0 / (l0 * inv_z[tri, 0] + l1 * inv_z[tri, 1] + l2 * inv_z[tri, 2])
        tile = depth[ymin:ymax + 1, xmin:xmax + 1]
        np.minimum(tile, np.where(inside, zi, np.inf), out=tile)
