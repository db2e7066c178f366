# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Same semantics and layout as _kernels_py (the numpy lane); see that module's
docstring for the integral-raster layout. Scalar loops here replace the
vectorized gathers, which removes the temporary-array traffic from the
refiner's inner loop.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, ceil, cos, fabs, floor, hypot, sin

cnp.import_array()

BACKEND = "compiled"

cdef double PI = 3.14159265358979323846

INTEGRAL_SUBSTEPS = 4


def orientation_recursion(cnp.float64_t[:, :, ::1] values, double step_penalty):
    """Circular forward+backward min-recursion across orientation bins."""
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t h = values.shape[1]
    cdef Py_ssize_t w = values.shape[2]
    cdef Py_ssize_t k, i, j, y, x
    cdef double cand
    for k in range(1, 2 * n):
        i = k % n
        j = (k - 1) % n
        for y in range(h):
            for x in range(w):
                cand = values[j, y, x] + step_penalty
                if cand < values[i, y, x]:
                    values[i, y, x] = cand
    for k in range(2 * n - 2, -1, -1):
        i = k % n
        j = (k + 1) % n
        for y in range(h):
            for x in range(w):
                cand = values[j, y, x] + step_penalty
                if cand < values[i, y, x]:
                    values[i, y, x] = cand


def build_integral_slice(const cnp.float64_t[:, ::1] canon, double d_s, double inv_dp,
                         int line_scale=1):
    """Line-integral raster of one canonical slice (see numpy lane docs)."""
    cdef Py_ssize_t rows = canon.shape[0]
    cdef Py_ssize_t cols = canon.shape[1]
    cdef int s = INTEGRAL_SUBSTEPS
    cdef int m = line_scale
    cdef Py_ssize_t out_rows = m * (rows - 1) + 1
    cdef Py_ssize_t off = <Py_ssize_t>floor((cols - 1) * d_s * m) if cols > 1 else 0

    out = np.empty((out_rows, cols), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out_mv = out
    shifts = np.empty(cols, dtype=np.int64)
    cdef cnp.int64_t[::1] shift_mv = shifts
    cdef Py_ssize_t k, lam, row, r0, r1
    cdef int j
    cdef double acc, u, cross, fr, va, vb, sample
    for k in range(cols):
        shift_mv[k] = <cnp.int64_t>floor(k * d_s * m)

    with nogil:
        for lam in range(-off, out_rows):
            acc = 0.0
            for k in range(cols):
                row = lam + shift_mv[k]
                if 0 <= row < out_rows:
                    out_mv[row, k] = acc
                if k == cols - 1:
                    break
                # integrate interval [k, k+1] on this line (midpoint substeps)
                if 0 <= row < out_rows:
                    sample = 0.0
                    for j in range(s):
                        u = (j + 0.5) / s
                        cross = (lam + (k + u) * d_s * m) / m
                        r0 = <Py_ssize_t>floor(cross)
                        fr = cross - r0
                        if r0 < 0:
                            r0 = 0
                            fr = 0.0
                        elif r0 > rows - 1:
                            r0 = rows - 1
                            fr = 0.0
                        r1 = r0 + 1
                        if r1 > rows - 1:
                            r1 = rows - 1
                        va = (1.0 - fr) * canon[r0, k] + fr * canon[r1, k]
                        vb = (1.0 - fr) * canon[r0, k + 1] + fr * canon[r1, k + 1]
                        sample += (1.0 - u) * va + u * vb
                    acc += sample * inv_dp / s
    return out


def rasterize_segments(mask, x0, y0, x1, y1):
    """Draw 1 px wide line rasters into a boolean mask, in place."""
    cdef cnp.uint8_t[:, ::1] m = mask.view(np.uint8)
    cdef cnp.float64_t[::1] ax = np.ascontiguousarray(x0, dtype=np.float64)
    cdef cnp.float64_t[::1] ay = np.ascontiguousarray(y0, dtype=np.float64)
    cdef cnp.float64_t[::1] bx = np.ascontiguousarray(x1, dtype=np.float64)
    cdef cnp.float64_t[::1] by = np.ascontiguousarray(y1, dtype=np.float64)
    cdef Py_ssize_t h = m.shape[0]
    cdef Py_ssize_t w = m.shape[1]
    cdef Py_ssize_t i, k, n, xi, yi
    cdef double xa, ya, xb, yb, t
    for i in range(ax.shape[0]):
        xa = floor(ax[i] + 0.5)
        ya = floor(ay[i] + 0.5)
        xb = floor(bx[i] + 0.5)
        yb = floor(by[i] + 0.5)
        n = <Py_ssize_t>(fabs(xb - xa) if fabs(xb - xa) > fabs(yb - ya) else fabs(yb - ya)) + 1
        for k in range(n):
            t = k / <double>(n - 1) if n > 1 else 0.0
            xi = <Py_ssize_t>floor(xa + t * (xb - xa) + 0.5)
            yi = <Py_ssize_t>floor(ya + t * (yb - ya) + 0.5)
            if 0 <= xi < w and 0 <= yi < h:
                m[yi, xi] = 1


# ---------------------------------------------------------------------------
# Integral-tensor evaluation
# ---------------------------------------------------------------------------

cdef inline double _pixel_read(const cnp.float64_t[::1] flat,
                               const cnp.int64_t[::1] offsets,
                               const cnp.int64_t[::1] n_rows,
                               const cnp.int64_t[::1] n_cols,
                               Py_ssize_t z, cnp.int64_t line, double p,
                               double slope, bint* trunc) nogil:
    cdef cnp.int64_t rows = n_rows[z]
    cdef cnp.int64_t cols = n_cols[z]
    cdef cnp.int64_t pa = <cnp.int64_t>floor(p)
    cdef double dp = p - pa
    cdef cnp.int64_t pb = pa + 1
    cdef cnp.int64_t pa_c = pa
    cdef cnp.int64_t pb_c = pb
    if pa_c < 0:
        pa_c = 0
    elif pa_c > cols - 1:
        pa_c = cols - 1
    if pb_c < 0:
        pb_c = 0
    elif pb_c > cols - 1:
        pb_c = cols - 1
    cdef cnp.int64_t ra = line + <cnp.int64_t>floor(pa_c * slope)
    cdef cnp.int64_t rb = line + <cnp.int64_t>floor(pb_c * slope)
    cdef cnp.int64_t ra_c = ra
    cdef cnp.int64_t rb_c = rb
    if ra_c < 0:
        ra_c = 0
    elif ra_c > rows - 1:
        ra_c = rows - 1
    if rb_c < 0:
        rb_c = 0
    elif rb_c > rows - 1:
        rb_c = rows - 1
    if pa != pa_c or pb != pb_c or ra != ra_c or rb != rb_c:
        trunc[0] = True
    cdef double va = flat[offsets[z] + ra_c * cols + pa_c]
    cdef double vb = flat[offsets[z] + rb_c * cols + pb_c]
    return va + (vb - va) * dp


cdef inline double _image_read(const cnp.float64_t[::1] flat,
                               const cnp.int64_t[::1] offsets,
                               const cnp.int64_t[::1] n_rows,
                               const cnp.int64_t[::1] n_cols,
                               const cnp.uint8_t[::1] x_p,
                               const cnp.uint8_t[::1] x_d,
                               const cnp.float64_t[::1] d_p,
                               const cnp.float64_t[::1] row_slope,
                               const cnp.float64_t[::1] foot_step,
                               int line_scale, double width,
                               Py_ssize_t z, double cx, double cy, double r,
                               bint* trunc) nogil:
    cdef double slope = row_slope[z]
    cdef double step = foot_step[z]
    cdef double x = cx if x_p[z] else (width - 1.0) - cx
    cdef double p = x if x_d[z] else cy
    cdef double cross = cy if x_d[z] else x
    cdef double line = cross * line_scale - p * slope
    cdef cnp.int64_t la = <cnp.int64_t>floor(line)
    cdef double dl = line - la
    cdef double pa = p + dl * step
    cdef double pb = pa - step
    cdef double rp = r * d_p[z]
    cdef double va1 = _pixel_read(flat, offsets, n_rows, n_cols, z, la, pa - rp, slope, trunc)
    cdef double va2 = _pixel_read(flat, offsets, n_rows, n_cols, z, la, pa + rp, slope, trunc)
    cdef double vb1 = _pixel_read(flat, offsets, n_rows, n_cols, z, la + 1, pb - rp, slope, trunc)
    cdef double vb2 = _pixel_read(flat, offsets, n_rows, n_cols, z, la + 1, pb + rp, slope, trunc)
    cdef double da = va2 - va1
    cdef double db = vb2 - vb1
    return da + (db - da) * dl


def eval_pixel_value(const cnp.float64_t[::1] flat,
                     const cnp.int64_t[::1] offsets,
                     const cnp.int64_t[::1] n_rows,
                     const cnp.int64_t[::1] n_cols,
                     z, line, pix, slope):
    cdef const cnp.int64_t[::1] zz = np.ascontiguousarray(z, dtype=np.int64)
    cdef const cnp.int64_t[::1] ll = np.ascontiguousarray(line, dtype=np.int64)
    cdef const cnp.float64_t[::1] pp = np.ascontiguousarray(pix, dtype=np.float64)
    cdef const cnp.float64_t[::1] ss = np.ascontiguousarray(
        np.broadcast_to(slope, np.shape(pix)), dtype=np.float64)
    n = zz.shape[0]
    out = np.empty(n, dtype=np.float64)
    tr = np.zeros(n, dtype=bool)
    cdef cnp.float64_t[::1] out_mv = out
    cdef cnp.uint8_t[::1] tr_mv = tr.view(np.uint8)
    cdef Py_ssize_t i
    cdef bint t
    for i in range(zz.shape[0]):
        t = False
        out_mv[i] = _pixel_read(flat, offsets, n_rows, n_cols,
                                zz[i], ll[i], pp[i], ss[i], &t)
        tr_mv[i] = t
    return out, tr


def eval_image_value(const cnp.float64_t[::1] flat,
                     const cnp.int64_t[::1] offsets,
                     const cnp.int64_t[::1] n_rows,
                     const cnp.int64_t[::1] n_cols,
                     const cnp.uint8_t[::1] x_p,
                     const cnp.uint8_t[::1] x_d,
                     const cnp.float64_t[::1] d_p,
                     const cnp.float64_t[::1] row_slope,
                     const cnp.float64_t[::1] foot_step,
                     int line_scale, double width,
                     z, cx, cy, r):
    cdef const cnp.int64_t[::1] zz = np.ascontiguousarray(z, dtype=np.int64)
    cdef const cnp.float64_t[::1] cxx = np.ascontiguousarray(cx, dtype=np.float64)
    cdef const cnp.float64_t[::1] cyy = np.ascontiguousarray(cy, dtype=np.float64)
    cdef const cnp.float64_t[::1] rr = np.ascontiguousarray(r, dtype=np.float64)
    n = zz.shape[0]
    out = np.empty(n, dtype=np.float64)
    tr = np.zeros(n, dtype=bool)
    cdef cnp.float64_t[::1] out_mv = out
    cdef cnp.uint8_t[::1] tr_mv = tr.view(np.uint8)
    cdef Py_ssize_t i
    cdef bint t
    for i in range(zz.shape[0]):
        t = False
        out_mv[i] = _image_read(flat, offsets, n_rows, n_cols, x_p, x_d, d_p,
                                row_slope, foot_step, line_scale, width,
                                zz[i], cxx[i], cyy[i], rr[i], &t)
        tr_mv[i] = t
    return out, tr


def eval_idt3_batch(const cnp.float64_t[::1] flat,
                    const cnp.int64_t[::1] offsets,
                    const cnp.int64_t[::1] n_rows,
                    const cnp.int64_t[::1] n_cols,
                    const cnp.uint8_t[::1] x_p,
                    const cnp.uint8_t[::1] x_d,
                    const cnp.float64_t[::1] d_p,
                    const cnp.float64_t[::1] row_slope,
                    const cnp.float64_t[::1] foot_step,
                    int line_scale, double width, int n_orient,
                    const cnp.float64_t[::1] ax,
                    const cnp.float64_t[::1] ay,
                    const cnp.float64_t[::1] bx,
                    const cnp.float64_t[::1] by):
    """Mean directional chamfer distance of edges on the integral tensor."""
    cdef Py_ssize_t n = ax.shape[0]
    out = np.empty(n, dtype=np.float64)
    tr = np.zeros(n, dtype=bool)
    cdef cnp.float64_t[::1] out_mv = out
    cdef cnp.uint8_t[::1] tr_mv = tr.view(np.uint8)
    cdef Py_ssize_t i, za, zb
    cdef double dx, dy, d, cx, cy, theta, zf, dz, r, va, vb
    cdef bint t
    with nogil:
        for i in range(n):
            dx = bx[i] - ax[i]
            dy = by[i] - ay[i]
            d = hypot(dx, dy)
            cx = 0.5 * (ax[i] + bx[i])
            cy = 0.5 * (ay[i] + by[i])
            theta = atan2(dy, dx)
            theta = theta - PI * floor(theta / PI)
            if theta >= PI:
                theta -= PI
            zf = theta * n_orient / PI
            za = <Py_ssize_t>floor(zf)
            dz = zf - za
            za = za % n_orient
            zb = (za + 1) % n_orient
            r = 0.5 * d
            t = False
            va = _image_read(flat, offsets, n_rows, n_cols, x_p, x_d, d_p,
                             row_slope, foot_step, line_scale, width,
                             za, cx, cy, r, &t)
            vb = _image_read(flat, offsets, n_rows, n_cols, x_p, x_d, d_p,
                             row_slope, foot_step, line_scale, width,
                             zb, cx, cy, r, &t)
            out_mv[i] = (va + (vb - va) * dz) / d
            tr_mv[i] = t
    return out, tr


# ---------------------------------------------------------------------------
# Direct DT3 evaluation
# ---------------------------------------------------------------------------

cdef inline double _dt3_read(const cnp.float64_t[:, :, ::1] values,
                             double x, double y, double theta,
                             int n, Py_ssize_t h, Py_ssize_t w,
                             bint* trunc) nogil:
    cdef cnp.int64_t xa = <cnp.int64_t>floor(x)
    cdef cnp.int64_t ya = <cnp.int64_t>floor(y)
    cdef double fx = x - xa
    cdef double fy = y - ya
    cdef cnp.int64_t xa_c = xa
    cdef cnp.int64_t xb_c = xa + 1
    cdef cnp.int64_t ya_c = ya
    cdef cnp.int64_t yb_c = ya + 1
    if xa < 0 or xa + 1 > w - 1 or ya < 0 or ya + 1 > h - 1:
        trunc[0] = True
    if xa_c < 0:
        xa_c = 0
    elif xa_c > w - 1:
        xa_c = w - 1
    if xb_c < 0:
        xb_c = 0
    elif xb_c > w - 1:
        xb_c = w - 1
    if ya_c < 0:
        ya_c = 0
    elif ya_c > h - 1:
        ya_c = h - 1
    if yb_c < 0:
        yb_c = 0
    elif yb_c > h - 1:
        yb_c = h - 1
    cdef double zf = theta - PI * floor(theta / PI)
    zf = zf * n / PI
    cdef Py_ssize_t za = <Py_ssize_t>floor(zf)
    cdef double wz = zf - za
    za = za % n
    cdef Py_ssize_t zb = (za + 1) % n
    cdef double bil_a, bil_b
    bil_a = (values[za, ya_c, xa_c] * (1 - fx) * (1 - fy)
             + values[za, ya_c, xb_c] * fx * (1 - fy)
             + values[za, yb_c, xa_c] * (1 - fx) * fy
             + values[za, yb_c, xb_c] * fx * fy)
    bil_b = (values[zb, ya_c, xa_c] * (1 - fx) * (1 - fy)
             + values[zb, ya_c, xb_c] * fx * (1 - fy)
             + values[zb, yb_c, xa_c] * (1 - fx) * fy
             + values[zb, yb_c, xb_c] * fx * fy)
    return (1.0 - wz) * bil_a + wz * bil_b


def eval_dt3_points(const cnp.float64_t[:, :, ::1] values, x, y, theta):
    """DT3 reads with bilinear spatial and circular orientation interp."""
    cdef const cnp.float64_t[::1] xx = np.ascontiguousarray(x, dtype=np.float64)
    cdef const cnp.float64_t[::1] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef const cnp.float64_t[::1] tt = np.ascontiguousarray(
        np.broadcast_to(theta, np.shape(x)), dtype=np.float64)
    cdef int n = <int>values.shape[0]
    cdef Py_ssize_t h = values.shape[1]
    cdef Py_ssize_t w = values.shape[2]
    cdef Py_ssize_t m = xx.shape[0]
    out = np.empty(m, dtype=np.float64)
    tr = np.zeros(m, dtype=bool)
    cdef cnp.float64_t[::1] out_mv = out
    cdef cnp.uint8_t[::1] tr_mv = tr.view(np.uint8)
    cdef Py_ssize_t i
    cdef bint t
    with nogil:
        for i in range(m):
            t = False
            out_mv[i] = _dt3_read(values, xx[i], yy[i], tt[i], n, h, w, &t)
            tr_mv[i] = t
    return out, tr


def eval_direct_batch(const cnp.float64_t[:, :, ::1] values,
                      const cnp.float64_t[::1] ax,
                      const cnp.float64_t[::1] ay,
                      const cnp.float64_t[::1] bx,
                      const cnp.float64_t[::1] by):
    """Mean DT3 value at sub-interval midpoints every pixel step per edge."""
    cdef int n = <int>values.shape[0]
    cdef Py_ssize_t h = values.shape[1]
    cdef Py_ssize_t w = values.shape[2]
    cdef Py_ssize_t m = ax.shape[0]
    out = np.empty(m, dtype=np.float64)
    tr = np.zeros(m, dtype=bool)
    cdef cnp.float64_t[::1] out_mv = out
    cdef cnp.uint8_t[::1] tr_mv = tr.view(np.uint8)
    cdef Py_ssize_t i, k, cnt
    cdef double d, theta, tpar, acc, xs, ys
    cdef bint t
    with nogil:
        for i in range(m):
            d = hypot(bx[i] - ax[i], by[i] - ay[i])
            cnt = <Py_ssize_t>ceil(d)
            if cnt < 1:
                cnt = 1
            theta = atan2(by[i] - ay[i], bx[i] - ax[i])
            acc = 0.0
            t = False
            for k in range(cnt):
                tpar = (k + 0.5) / cnt
                xs = ax[i] + tpar * (bx[i] - ax[i])
                ys = ay[i] + tpar * (by[i] - ay[i])
                acc += _dt3_read(values, xs, ys, theta, n, h, w, &t)
            out_mv[i] = acc / cnt
            tr_mv[i] = t
    return out, tr


# ---------------------------------------------------------------------------
# Depth-buffer rasterization
# ---------------------------------------------------------------------------

def rasterize_triangles(cnp.float64_t[:, ::1] depth,
                        const cnp.float64_t[:, :, ::1] uv,
                        const cnp.float64_t[:, ::1] z):
    """Min-depth fill of projected triangles, perspective-correct."""
    cdef Py_ssize_t h = depth.shape[0]
    cdef Py_ssize_t w = depth.shape[1]
    cdef Py_ssize_t ntri = uv.shape[0]
    cdef Py_ssize_t tri, xi, yi, xmin, xmax, ymin, ymax
    cdef double x0, y0, x1, y1, x2, y2, area, l0, l1, l2, zi
    cdef double iz0, iz1, iz2, lo, hi
    with nogil:
        for tri in range(ntri):
            x0 = uv[tri, 0, 0]; y0 = uv[tri, 0, 1]
            x1 = uv[tri, 1, 0]; y1 = uv[tri, 1, 1]
            x2 = uv[tri, 2, 0]; y2 = uv[tri, 2, 1]
            area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            if area == 0.0:
                continue
            iz0 = 1.0 / z[tri, 0]; iz1 = 1.0 / z[tri, 1]; iz2 = 1.0 / z[tri, 2]
            lo = x0
            if x1 < lo: lo = x1
            if x2 < lo: lo = x2
            hi = x0
            if x1 > hi: hi = x1
            if x2 > hi: hi = x2
            xmin = <Py_ssize_t>ceil(lo)
            xmax = <Py_ssize_t>floor(hi)
            if xmin < 0: xmin = 0
            if xmax > w - 1: xmax = w - 1
            lo = y0
            if y1 < lo: lo = y1
            if y2 < lo: lo = y2
            hi = y0
            if y1 > hi: hi = y1
            if y2 > hi: hi = y2
            ymin = <Py_ssize_t>ceil(lo)
            ymax = <Py_ssize_t>floor(hi)
            if ymin < 0: ymin = 0
            if ymax > h - 1: ymax = h - 1
            for yi in range(ymin, ymax + 1):
                for xi in range(xmin, xmax + 1):
                    l2 = ((x1 - x0) * (yi - y0) - (xi - x0) * (y1 - y0)) / area
                    l1 = ((xi - x0) * (y2 - y0) - (x2 - x0) * (yi - y0)) / area
                    l0 = 1.0 - l1 - l2
                    if l0 >= 0 and l1 >= 0 and l2 >= 0:
                        zi = 1.0 / (l0 * iz0 + l1 * iz1 + l2 * iz2)
                        if zi < depth[yi, xi]:
                            depth[yi, xi] = zi
