"""NumPy ray-casting backend.

Same algorithm as the compiled core: closed-form slab/quadratic tests for
boxes and cylinders, and for the ground a coarse march at half-cell steps
followed by bisection.  The march assumes terrain varies on scales well
above the grid cell (world generation keeps cell <= wavelength / 8), so a
half-cell step cannot jump over a crossing.

Geometry packing (shared with the compiled backend):
    boxes:     (B, 8) rows [cx, cy, cz, hx, hy, hz, cos_yaw, sin_yaw]
               (half-sizes; yaw about +z)
    cylinders: (C, 5) rows [cx, cy, radius, z_bottom, z_top]
"""

from __future__ import annotations

import numpy as np

_BISECT_ITERS = 40


def _heights_at(heights: np.ndarray, x0: float, y0: float, cell: float,
                x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear terrain height at (x, y); also returns an in-grid mask."""
    ny, nx = heights.shape
    gx = (x - x0) / cell
    gy = (y - y0) / cell
    valid = (gx >= 0.0) & (gx <= nx - 1) & (gy >= 0.0) & (gy <= ny - 1)
    ix = np.clip(np.floor(gx).astype(np.int64), 0, nx - 2)
    iy = np.clip(np.floor(gy).astype(np.int64), 0, ny - 2)
    u = np.clip(gx - ix, 0.0, 1.0)
    v = np.clip(gy - iy, 0.0, 1.0)
    h00 = heights[iy, ix]
    h10 = heights[iy, ix + 1]
    h01 = heights[iy + 1, ix]
    h11 = heights[iy + 1, ix + 1]
    h = h00 * (1 - u) * (1 - v) + h10 * u * (1 - v) + h01 * (1 - u) * v + h11 * u * v
    return h, valid


def _ground_f(origins, dirs, t, heights, x0, y0, cell):
    """Signed height of the ray point above the terrain (+inf off-grid)."""
    p = origins + dirs * t[:, None]
    h, valid = _heights_at(heights, x0, y0, cell, p[:, 0], p[:, 1])
    f = p[:, 2] - h
    return np.where(valid, f, np.inf)


def _cast_ground(origins, dirs, max_range, heights, x0, y0, cell) -> np.ndarray:
    n = origins.shape[0]
    ranges = np.full(n, np.inf)
    if heights.size == 0:
        return ranges
    # Pad the terrain band so flat ground still yields a bracketable interval.
    zmin = float(heights.min()) - 1e-3
    zmax = float(heights.max()) + 1e-3

    # Restrict the march to t where the ray's z lies inside the terrain band.
    dz = dirs[:, 2]
    oz = origins[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = (zmin - oz) / dz
        tb = (zmax - oz) / dz
    t_lo = np.where(dz != 0.0, np.minimum(ta, tb), 0.0)
    t_hi = np.where(dz != 0.0, np.maximum(ta, tb), max_range)
    level = (dz == 0.0) & ((oz < zmin) | (oz > zmax))
    t_lo = np.clip(t_lo, 0.0, max_range)
    t_hi = np.clip(t_hi, 0.0, max_range)
    t_hi = np.where(level, 0.0, t_hi)

    step = 0.5 * cell
    active = t_hi > t_lo
    if not np.any(active):
        return ranges

    n_steps = int(np.ceil((t_hi[active] - t_lo[active]).max() / step)) + 1
    t_prev = t_lo.copy()
    f_prev = _ground_f(origins, dirs, t_prev, heights, x0, y0, cell)
    # A ray starting below the surface hits immediately.
    below = active & (f_prev <= 0.0) & np.isfinite(f_prev)
    ranges[below] = t_prev[below]
    active &= ~below

    lo = np.zeros(n)
    hi = np.zeros(n)
    bracket = np.zeros(n, dtype=bool)
    for k in range(1, n_steps + 1):
        if not np.any(active):
            break
        t_cur = np.minimum(t_prev + step, t_hi)
        f_cur = _ground_f(origins, dirs, t_cur, heights, x0, y0, cell)
        crossed = active & (f_cur <= 0.0)
        lo[crossed] = t_prev[crossed]
        hi[crossed] = t_cur[crossed]
        bracket |= crossed
        active &= ~crossed
        active &= t_cur < t_hi
        t_prev = t_cur
        f_prev = f_cur

    if np.any(bracket):
        idx = np.nonzero(bracket)[0]
        blo = lo[idx]
        bhi = hi[idx]
        o = origins[idx]
        d = dirs[idx]
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (blo + bhi)
            fm = _ground_f(o, d, mid, heights, x0, y0, cell)
            neg = fm <= 0.0
            bhi = np.where(neg, mid, bhi)
            blo = np.where(neg, blo, mid)
        ranges[idx] = bhi
    return ranges


def _cast_boxes(origins, dirs, max_range, boxes) -> np.ndarray:
    n = origins.shape[0]
    best = np.full(n, np.inf)
    for b in boxes:
        cx, cy, cz, hx, hy, hz, c, s = b
        # Rotate into the box frame (yaw only).
        px = origins[:, 0] - cx
        py = origins[:, 1] - cy
        ox = c * px + s * py
        oy = -s * px + c * py
        oz = origins[:, 2] - cz
        dx = c * dirs[:, 0] + s * dirs[:, 1]
        dy = -s * dirs[:, 0] + c * dirs[:, 1]
        dz = dirs[:, 2]
        tmin = np.zeros(n)
        tmax = np.full(n, max_range)
        ok = np.ones(n, dtype=bool)
        for o_ax, d_ax, h_ax in ((ox, dx, hx), (oy, dy, hy), (oz, dz, hz)):
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / d_ax
                t1 = (-h_ax - o_ax) * inv
                t2 = (h_ax - o_ax) * inv
            near = np.minimum(t1, t2)
            far = np.maximum(t1, t2)
            par = d_ax == 0.0
            inside = np.abs(o_ax) <= h_ax
            ok &= ~par | inside
            tmin = np.where(par, tmin, np.maximum(tmin, near))
            tmax = np.where(par, tmax, np.minimum(tmax, far))
        hit = ok & (tmin <= tmax) & (tmin > 0.0)
        best = np.where(hit & (tmin < best), tmin, best)
    return best


def _cast_cylinders(origins, dirs, max_range, cylinders) -> np.ndarray:
    n = origins.shape[0]
    best = np.full(n, np.inf)
    for cyl in cylinders:
        cx, cy, r, z0, z1 = cyl
        ox = origins[:, 0] - cx
        oy = origins[:, 1] - cy
        oz = origins[:, 2]
        dx = dirs[:, 0]
        dy = dirs[:, 1]
        dz = dirs[:, 2]
        # Side surface: quadratic in t.
        a = dx * dx + dy * dy
        bq = 2.0 * (ox * dx + oy * dy)
        cq = ox * ox + oy * oy - r * r
        disc = bq * bq - 4.0 * a * cq
        with np.errstate(divide="ignore", invalid="ignore"):
            sq = np.sqrt(np.maximum(disc, 0.0))
            tside1 = (-bq - sq) / (2.0 * a)
            tside2 = (-bq + sq) / (2.0 * a)
        for t in (tside1, tside2):
            z = oz + dz * t
            hit = (a > 0.0) & (disc >= 0.0) & (t > 0.0) & (z >= z0) & (z <= z1)
            best = np.where(hit & (t < best), t, best)
        # End caps.
        for zc in (z0, z1):
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (zc - oz) / dz
            x = ox + dx * t
            y = oy + dy * t
            hit = (dz != 0.0) & (t > 0.0) & (x * x + y * y <= r * r)
            best = np.where(hit & (t < best), t, best)
    return np.where(best <= max_range, best, np.inf)


def cast_rays(origins: np.ndarray, dirs: np.ndarray, max_range: float,
              heights: np.ndarray, hf_x0: float, hf_y0: float, hf_cell: float,
              boxes: np.ndarray, cylinders: np.ndarray) -> np.ndarray:
    """Nearest-hit range per ray against terrain + primitives; inf = miss."""
    origins = np.ascontiguousarray(origins, dtype=float).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, dtype=float).reshape(-1, 3)
    ranges = _cast_ground(origins, dirs, max_range, heights, hf_x0, hf_y0, hf_cell)
    if boxes is not None and len(boxes):
        ranges = np.minimum(ranges, _cast_boxes(origins, dirs, max_range, np.asarray(boxes, dtype=float)))
    if cylinders is not None and len(cylinders):
        ranges = np.minimum(ranges, _cast_cylinders(origins, dirs, max_range, np.asarray(cylinders, dtype=float)))
    return np.where(ranges <= max_range, ranges, np.inf)
