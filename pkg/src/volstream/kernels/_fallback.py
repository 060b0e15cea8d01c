"""Numpy implementations of the hot kernels.

These are the reference semantics; the compiled extension in _compiled.pyx
implements the same contracts point-for-point. Window sums are gathered per
point (not via running sums) so results are invariant to where a point sits
in the image.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

# Bresenham circle of radius 3, clockwise from 12 o'clock: (dx, dy) pairs.
FAST_CIRCLE = np.array([
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
], dtype=np.int64)

FAST_ARC_MIN = 9


def lk_points(prev: np.ndarray, cur: np.ndarray, xs: np.ndarray, ys: np.ndarray,
              window: int, eps_eig: float, grad_order: int = 2
              ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lucas-Kanade flow at the given pixel positions.

    prev/cur are float64 grayscale in [0,1]. Spatial derivatives are central
    differences on prev (2-point by default; grad_order=4 selects the 5-tap
    fourth-order stencil, whose flat transfer function avoids the systematic
    flow overshoot on fine texture); the temporal difference is cur - prev;
    all five gradient products are summed over a window x window
    neighborhood. Points must lie at least window//2 + grad_order//2 pixels
    from every border (caller's contract). Returns (u, v, valid); invalid
    where the structure tensor's smaller eigenvalue is below eps_eig.
    """
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    gx = np.zeros_like(prev)
    gy = np.zeros_like(prev)
    if grad_order == 4:
        gx[:, 2:-2] = (-prev[:, 4:] + 8 * prev[:, 3:-1]
                       - 8 * prev[:, 1:-3] + prev[:, :-4]) / 12.0
        gy[2:-2, :] = (-prev[4:, :] + 8 * prev[3:-1, :]
                       - 8 * prev[1:-3, :] + prev[:-4, :]) / 12.0
    else:
        gx[:, 1:-1] = (prev[:, 2:] - prev[:, :-2]) * 0.5
        gy[1:-1, :] = (prev[2:, :] - prev[:-2, :]) * 0.5
    dt = cur - prev

    half = window // 2
    offs = np.arange(-half, half + 1)
    wy = (ys[:, None, None] + offs[None, :, None])
    wx = (xs[:, None, None] + offs[None, None, :])

    pgx = gx[wy, wx]
    pgy = gy[wy, wx]
    pdt = dt[wy, wx]
    e_x = np.sum(pgx * pgx, axis=(1, 2))
    e_y = np.sum(pgy * pgy, axis=(1, 2))
    e_xy = np.sum(pgx * pgy, axis=(1, 2))
    e_xt = np.sum(pgx * pdt, axis=(1, 2))
    e_yt = np.sum(pgy * pdt, axis=(1, 2))

    half_tr = (e_x + e_y) * 0.5
    disc = np.sqrt(((e_x - e_y) * 0.5) ** 2 + e_xy ** 2)
    lambda_min = half_tr - disc
    valid = lambda_min >= eps_eig

    det = e_x * e_y - e_xy * e_xy
    u = np.zeros(len(xs))
    v = np.zeros(len(xs))
    d = det[valid]
    u[valid] = (e_y[valid] * -e_xt[valid] - e_xy[valid] * -e_yt[valid]) / d
    v[valid] = (e_x[valid] * -e_yt[valid] - e_xy[valid] * -e_xt[valid]) / d
    return u, v, valid


def fast_scores(gray: np.ndarray, threshold: int) -> np.ndarray:
    """FAST-9/16 corner response for every pixel (0 where not a corner).

    A pixel is a corner when >= 9 circularly contiguous circle pixels are all
    brighter than center + threshold or all darker than center - threshold.
    The response is the summed excess |p - c| - threshold over the qualifying
    polarity. A 3-pixel border is always 0.
    """
    h, w = gray.shape
    scores = np.zeros((h, w), dtype=np.float32)
    if h <= 6 or w <= 6:
        return scores
    c = gray[3:-3, 3:-3].astype(np.int32)
    ring = np.empty((16,) + c.shape, dtype=np.int32)
    for i, (dx, dy) in enumerate(FAST_CIRCLE):
        ring[i] = gray[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx]

    for sign in (1, -1):
        excess = sign * (ring - c[None]) - threshold
        mask = excess > 0
        # contiguous circular run >= FAST_ARC_MIN via a doubled cumulative count
        doubled = np.concatenate([mask, mask[:FAST_ARC_MIN]], axis=0)
        cnt = np.cumsum(doubled, axis=0, dtype=np.int16)
        runs = cnt[FAST_ARC_MIN:] - cnt[:-FAST_ARC_MIN]
        is_corner = (runs == FAST_ARC_MIN).any(axis=0)
        strength = np.where(mask, excess, 0).sum(axis=0, dtype=np.int32)
        cur = np.where(is_corner, strength, 0).astype(np.float32)
        np.maximum(scores[3:-3, 3:-3], cur, out=scores[3:-3, 3:-3])
    return scores


def _splat_offsets(radius: int) -> np.ndarray:
    r = np.arange(-radius + 1, radius)
    dy, dx = np.meshgrid(r, r, indexing="ij")
    keep = dx * dx + dy * dy < radius * radius
    return np.column_stack([dx[keep], dy[keep]])


def splat_render(us: np.ndarray, vs: np.ndarray, zs: np.ndarray,
                 colors: np.ndarray, radius: int, width: int, height: int) -> np.ndarray:
    """Z-buffered point splatting onto a black (H, W, 3) uint8 canvas.

    Each point paints a disc of the given pixel radius; the nearest point
    (ties: lowest input index) wins every covered pixel.
    """
    image = np.zeros((height, width, 3), dtype=np.uint8)
    n = len(us)
    if n == 0:
        return image
    us = np.rint(np.asarray(us)).astype(np.int64)
    vs = np.rint(np.asarray(vs)).astype(np.int64)

    # painter rank: far-to-near, ties broken toward higher index first so the
    # lowest index lands last (= wins)
    rank = np.lexsort((-np.arange(n), -np.asarray(zs)))

    pix_all = []
    rk_all = []
    col_all = []
    for dx, dy in _splat_offsets(radius):
        px = us[rank] + dx
        py = vs[rank] + dy
        ok = (px >= 0) & (px < width) & (py >= 0) & (py < height)
        pix_all.append(py[ok] * width + px[ok])
        rk_all.append(np.nonzero(ok)[0])
        col_all.append(colors[rank][ok])
    pix = np.concatenate(pix_all)
    rk = np.concatenate(rk_all)
    col = np.concatenate(col_all)

    # keep, per pixel, the entry with the highest painter rank
    order = np.argsort(-rk, kind="stable")
    pix, col = pix[order], col[order]
    uniq, first = np.unique(pix, return_index=True)
    image.reshape(-1, 3)[uniq] = col[first]
    return image
