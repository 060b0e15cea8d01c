# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels (see _fallback.py for the
reference semantics; the two backends must agree to float tolerance)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "compiled"

cdef int[16] _CIRCLE_DX = [0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1]
cdef int[16] _CIRCLE_DY = [-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3]
cdef int _ARC_MIN = 9


def lk_points(cnp.ndarray[cnp.float64_t, ndim=2] prev,
              cnp.ndarray[cnp.float64_t, ndim=2] cur,
              xs, ys, int window, double eps_eig, int grad_order=2):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pxs = np.ascontiguousarray(xs, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pys = np.ascontiguousarray(ys, dtype=np.int64)
    cdef Py_ssize_t n = pxs.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v = np.zeros(n)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] valid = np.zeros(n, dtype=np.uint8)

    cdef int half = window // 2
    cdef bint high_order = grad_order == 4
    cdef Py_ssize_t i, wy, wx
    cdef long px, py
    cdef double gx, gy, dt
    cdef double e_x, e_y, e_xy, e_xt, e_yt
    cdef double half_tr, disc, lam_min, det

    for i in range(n):
        px = pxs[i]
        py = pys[i]
        e_x = e_y = e_xy = e_xt = e_yt = 0.0
        for wy in range(py - half, py + half + 1):
            for wx in range(px - half, px + half + 1):
                if high_order:
                    gx = (-prev[wy, wx + 2] + 8.0 * prev[wy, wx + 1]
                          - 8.0 * prev[wy, wx - 1] + prev[wy, wx - 2]) / 12.0
                    gy = (-prev[wy + 2, wx] + 8.0 * prev[wy + 1, wx]
                          - 8.0 * prev[wy - 1, wx] + prev[wy - 2, wx]) / 12.0
                else:
                    gx = (prev[wy, wx + 1] - prev[wy, wx - 1]) * 0.5
                    gy = (prev[wy + 1, wx] - prev[wy - 1, wx]) * 0.5
                dt = cur[wy, wx] - prev[wy, wx]
                e_x += gx * gx
                e_y += gy * gy
                e_xy += gx * gy
                e_xt += gx * dt
                e_yt += gy * dt
        half_tr = (e_x + e_y) * 0.5
        disc = sqrt(((e_x - e_y) * 0.5) * ((e_x - e_y) * 0.5) + e_xy * e_xy)
        lam_min = half_tr - disc
        if lam_min >= eps_eig:
            det = e_x * e_y - e_xy * e_xy
            u[i] = (e_y * -e_xt - e_xy * -e_yt) / det
            v[i] = (e_x * -e_yt - e_xy * -e_xt) / det
            valid[i] = 1
    return u, v, valid.view(np.bool_)


def fast_scores(cnp.ndarray[cnp.uint8_t, ndim=2] gray, int threshold):
    cdef Py_ssize_t h = gray.shape[0]
    cdef Py_ssize_t w = gray.shape[1]
    cdef cnp.ndarray[cnp.float32_t, ndim=2] scores = np.zeros((h, w), dtype=np.float32)
    if h <= 6 or w <= 6:
        return scores

    cdef int[32] ring
    cdef Py_ssize_t y, x
    cdef int i, c, run, best_run, excess
    cdef int bright_sum, dark_sum, bright_run, dark_run
    cdef double score

    for y in range(3, h - 3):
        for x in range(3, w - 3):
            c = gray[y, x]
            bright_sum = 0
            dark_sum = 0
            for i in range(16):
                ring[i] = gray[y + _CIRCLE_DY[i], x + _CIRCLE_DX[i]]
            # longest circular run per polarity
            bright_run = _max_run(ring, c + threshold, 1)
            dark_run = _max_run(ring, c - threshold, -1)
            score = 0.0
            if bright_run >= _ARC_MIN:
                for i in range(16):
                    excess = ring[i] - c - threshold
                    if excess > 0:
                        bright_sum += excess
                score = bright_sum
            if dark_run >= _ARC_MIN:
                for i in range(16):
                    excess = c - ring[i] - threshold
                    if excess > 0:
                        dark_sum += excess
                if dark_sum > score:
                    score = dark_sum
            scores[y, x] = score
    return scores


cdef int _max_run(int* ring, int level, int sign) nogil:
    """Longest circular run of ring values strictly beyond level (capped at 16)."""
    cdef int i, run = 0, best = 0
    for i in range(32):
        if sign * (ring[i & 15] - level) > 0:
            run += 1
            if run > best:
                best = run
        else:
            run = 0
    return 16 if best > 16 else best


def splat_render(us, vs, zs, colors, int radius, int width, int height):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pu = np.rint(np.asarray(us)).astype(np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pv = np.rint(np.asarray(vs)).astype(np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pz = np.ascontiguousarray(zs, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] col = np.ascontiguousarray(colors, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=3] image = np.zeros((height, width, 3), dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] zbuf = np.full((height, width), np.inf)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] owner = np.full((height, width), -1, dtype=np.int64)

    cdef Py_ssize_t n = pu.shape[0]
    cdef Py_ssize_t i
    cdef long dx, dy, x, y
    cdef long r2 = radius * radius
    cdef double z

    for i in range(n):
        z = pz[i]
        for dy in range(-radius + 1, radius):
            for dx in range(-radius + 1, radius):
                if dx * dx + dy * dy >= r2:
                    continue
                x = pu[i] + dx
                y = pv[i] + dy
                if x < 0 or x >= width or y < 0 or y >= height:
                    continue
                if z < zbuf[y, x] or (z == zbuf[y, x] and i < owner[y, x]):
                    zbuf[y, x] = z
                    owner[y, x] = i
                    image[y, x, 0] = col[i, 0]
                    image[y, x, 1] = col[i, 1]
                    image[y, x, 2] = col[i, 2]
    return np.asarray(image)
