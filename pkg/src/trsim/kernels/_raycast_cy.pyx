# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled ray-casting core: per-ray loops over terrain march + primitives.

Mirrors raycast_np exactly (same stepping, same bisection depth) so the two
backends agree to float tolerance.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, ceil, fabs, fmax, fmin, sqrt

cnp.import_array()

DEF BISECT_ITERS = 40


cdef inline double _height_at(const double[:, ::1] heights, double x0, double y0,
                              double cell, double x, double y, bint* valid) nogil:
    cdef Py_ssize_t ny = heights.shape[0]
    cdef Py_ssize_t nx = heights.shape[1]
    cdef double gx = (x - x0) / cell
    cdef double gy = (y - y0) / cell
    if gx < 0.0 or gx > nx - 1 or gy < 0.0 or gy > ny - 1:
        valid[0] = 0
        return 0.0
    valid[0] = 1
    cdef Py_ssize_t ix = <Py_ssize_t>gx
    cdef Py_ssize_t iy = <Py_ssize_t>gy
    if ix > nx - 2:
        ix = nx - 2
    if iy > ny - 2:
        iy = ny - 2
    cdef double u = gx - ix
    cdef double v = gy - iy
    if u < 0.0:
        u = 0.0
    elif u > 1.0:
        u = 1.0
    if v < 0.0:
        v = 0.0
    elif v > 1.0:
        v = 1.0
    cdef double h00 = heights[iy, ix]
    cdef double h10 = heights[iy, ix + 1]
    cdef double h01 = heights[iy + 1, ix]
    cdef double h11 = heights[iy + 1, ix + 1]
    return h00 * (1 - u) * (1 - v) + h10 * u * (1 - v) + h01 * (1 - u) * v + h11 * u * v


cdef inline double _ground_f(double ox, double oy, double oz,
                             double dx, double dy, double dz, double t,
                             const double[:, ::1] heights, double x0, double y0,
                             double cell) nogil:
    cdef bint valid = 0
    cdef double h = _height_at(heights, x0, y0, cell, ox + dx * t, oy + dy * t, &valid)
    if not valid:
        return INFINITY
    return (oz + dz * t) - h


cdef double _cast_ground_one(double ox, double oy, double oz,
                             double dx, double dy, double dz, double max_range,
                             const double[:, ::1] heights, double x0, double y0,
                             double cell, double zmin, double zmax) nogil:
    cdef double t_lo, t_hi, ta, tb
    if dz != 0.0:
        ta = (zmin - oz) / dz
        tb = (zmax - oz) / dz
        t_lo = fmin(ta, tb)
        t_hi = fmax(ta, tb)
    else:
        t_lo = 0.0
        t_hi = max_range
        if oz < zmin or oz > zmax:
            return INFINITY
    if t_lo < 0.0:
        t_lo = 0.0
    elif t_lo > max_range:
        t_lo = max_range
    if t_hi < 0.0:
        t_hi = 0.0
    elif t_hi > max_range:
        t_hi = max_range
    if t_hi <= t_lo:
        return INFINITY

    cdef double step = 0.5 * cell
    cdef double t_prev = t_lo
    cdef double f_prev = _ground_f(ox, oy, oz, dx, dy, dz, t_prev, heights, x0, y0, cell)
    if f_prev <= 0.0 and f_prev != INFINITY:
        return t_prev

    cdef long n_steps = <long>ceil((t_hi - t_lo) / step) + 1
    cdef double t_cur, f_cur, lo, hi, mid, fm
    cdef bint found = 0
    cdef long k
    lo = 0.0
    hi = 0.0
    for k in range(1, n_steps + 1):
        t_cur = t_prev + step
        if t_cur > t_hi:
            t_cur = t_hi
        f_cur = _ground_f(ox, oy, oz, dx, dy, dz, t_cur, heights, x0, y0, cell)
        if f_cur <= 0.0:
            lo = t_prev
            hi = t_cur
            found = 1
            break
        if t_cur >= t_hi:
            break
        t_prev = t_cur
        f_prev = f_cur
    if not found:
        return INFINITY
    for k in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        fm = _ground_f(ox, oy, oz, dx, dy, dz, mid, heights, x0, y0, cell)
        if fm <= 0.0:
            hi = mid
        else:
            lo = mid
    return hi


cdef double _cast_boxes_one(double ox0, double oy0, double oz0,
                            double ddx, double ddy, double ddz,
                            double max_range, const double[:, ::1] boxes) nogil:
    cdef double best = INFINITY
    cdef Py_ssize_t i
    cdef double cx, cy, cz, hx, hy, hz, c, s
    cdef double px, py, ox, oy, oz, dx, dy, dz
    cdef double tmin, tmax, inv, t1, t2, near, far
    cdef bint ok
    cdef int ax
    cdef double o_ax, d_ax, h_ax
    for i in range(boxes.shape[0]):
        cx = boxes[i, 0]; cy = boxes[i, 1]; cz = boxes[i, 2]
        hx = boxes[i, 3]; hy = boxes[i, 4]; hz = boxes[i, 5]
        c = boxes[i, 6]; s = boxes[i, 7]
        px = ox0 - cx
        py = oy0 - cy
        ox = c * px + s * py
        oy = -s * px + c * py
        oz = oz0 - cz
        dx = c * ddx + s * ddy
        dy = -s * ddx + c * ddy
        dz = ddz
        tmin = 0.0
        tmax = max_range
        ok = 1
        for ax in range(3):
            if ax == 0:
                o_ax = ox; d_ax = dx; h_ax = hx
            elif ax == 1:
                o_ax = oy; d_ax = dy; h_ax = hy
            else:
                o_ax = oz; d_ax = dz; h_ax = hz
            if d_ax == 0.0:
                if fabs(o_ax) > h_ax:
                    ok = 0
                    break
            else:
                inv = 1.0 / d_ax
                t1 = (-h_ax - o_ax) * inv
                t2 = (h_ax - o_ax) * inv
                near = fmin(t1, t2)
                far = fmax(t1, t2)
                tmin = fmax(tmin, near)
                tmax = fmin(tmax, far)
        if ok and tmin <= tmax and tmin > 0.0 and tmin < best:
            best = tmin
    return best


cdef double _cast_cylinders_one(double ox0, double oy0, double oz,
                                double dx, double dy, double dz,
                                double max_range, const double[:, ::1] cylinders) nogil:
    cdef double best = INFINITY
    cdef Py_ssize_t i
    cdef double cx, cy, r, z0, z1, ox, oy
    cdef double a, bq, cq, disc, sq, t, z, x, y
    cdef int j
    for i in range(cylinders.shape[0]):
        cx = cylinders[i, 0]; cy = cylinders[i, 1]; r = cylinders[i, 2]
        z0 = cylinders[i, 3]; z1 = cylinders[i, 4]
        ox = ox0 - cx
        oy = oy0 - cy
        a = dx * dx + dy * dy
        bq = 2.0 * (ox * dx + oy * dy)
        cq = ox * ox + oy * oy - r * r
        disc = bq * bq - 4.0 * a * cq
        if a > 0.0 and disc >= 0.0:
            sq = sqrt(disc)
            for j in range(2):
                if j == 0:
                    t = (-bq - sq) / (2.0 * a)
                else:
                    t = (-bq + sq) / (2.0 * a)
                z = oz + dz * t
                if t > 0.0 and z >= z0 and z <= z1 and t < best:
                    best = t
        if dz != 0.0:
            for j in range(2):
                if j == 0:
                    t = (z0 - oz) / dz
                else:
                    t = (z1 - oz) / dz
                x = ox + dx * t
                y = oy + dy * t
                if t > 0.0 and x * x + y * y <= r * r and t < best:
                    best = t
    if best > max_range:
        return INFINITY
    return best


def cast_rays(origins, dirs, double max_range, heights,
              double hf_x0, double hf_y0, double hf_cell, boxes, cylinders):
    """Nearest-hit range per ray against terrain + primitives; inf = miss."""
    cdef const double[:, ::1] o = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    cdef const double[:, ::1] d = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    cdef const double[:, ::1] hgt = np.ascontiguousarray(heights, dtype=np.float64)
    cdef const double[:, ::1] bx = np.ascontiguousarray(
        boxes if boxes is not None and len(boxes) else np.zeros((0, 8)), dtype=np.float64)
    cdef const double[:, ::1] cyl = np.ascontiguousarray(
        cylinders if cylinders is not None and len(cylinders) else np.zeros((0, 5)), dtype=np.float64)

    cdef Py_ssize_t n = o.shape[0]
    out_arr = np.full(n, np.inf)
    cdef double[::1] out = out_arr

    cdef double zmin = INFINITY
    cdef double zmax = -INFINITY
    cdef Py_ssize_t i, j
    if hgt.shape[0] > 0:
        for i in range(hgt.shape[0]):
            for j in range(hgt.shape[1]):
                if hgt[i, j] < zmin:
                    zmin = hgt[i, j]
                if hgt[i, j] > zmax:
                    zmax = hgt[i, j]
        # Pad so flat ground still yields a bracketable interval.
        zmin -= 1e-3
        zmax += 1e-3

    cdef double best, t
    with nogil:
        for i in range(n):
            best = INFINITY
            if hgt.shape[0] > 0:
                t = _cast_ground_one(o[i, 0], o[i, 1], o[i, 2],
                                     d[i, 0], d[i, 1], d[i, 2], max_range,
                                     hgt, hf_x0, hf_y0, hf_cell, zmin, zmax)
                if t < best:
                    best = t
            if bx.shape[0] > 0:
                t = _cast_boxes_one(o[i, 0], o[i, 1], o[i, 2],
                                    d[i, 0], d[i, 1], d[i, 2], max_range, bx)
                if t < best:
                    best = t
            if cyl.shape[0] > 0:
                t = _cast_cylinders_one(o[i, 0], o[i, 1], o[i, 2],
                                        d[i, 0], d[i, 1], d[i, 2], max_range, cyl)
                if t < best:
                    best = t
            if best <= max_range:
                out[i] = best
    return out_arr
