"""Corner features with rotation-steered binary descriptors, plus matching
and 3D-3D rigid alignment.

Detection is FAST-9/16 on the luma image; orientation comes from the
intensity centroid of a circular patch; the 256-bit descriptor compares
blurred intensities at a fixed random pattern rotated to the patch
orientation. No external detector is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CalibrationUnreliableError
from .geometry import CameraIntrinsics, RgbdFrame, RigidTransform

DESCRIPTOR_BITS = 256
DESCRIPTOR_BYTES = DESCRIPTOR_BITS // 8
FEATURE_BORDER = 16      # px; features closer to the border are discarded
PATTERN_RADIUS = 13      # max |offset| of a descriptor sample
ORIENTATION_RADIUS = 9

_LUMA = np.array([0.299, 0.587, 0.114])


def _luma_u8(color: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(color.astype(np.float64) @ _LUMA), 0, 255).astype(np.uint8)


def _make_pattern(seed: int = 0x0B5EC) -> np.ndarray:
    """256 fixed (x1, y1, x2, y2) sample pairs inside the pattern disc."""
    rng = np.random.default_rng(seed)
    pairs = np.zeros((DESCRIPTOR_BITS, 4), dtype=np.float64)
    count = 0
    while count < DESCRIPTOR_BITS:
        cand = rng.normal(0.0, PATTERN_RADIUS / 2.0, size=4)
        if (np.hypot(cand[0], cand[1]) <= PATTERN_RADIUS
                and np.hypot(cand[2], cand[3]) <= PATTERN_RADIUS):
            pairs[count] = cand
            count += 1
    return pairs


_PATTERN = _make_pattern()

_ORI_DY, _ORI_DX = np.meshgrid(np.arange(-ORIENTATION_RADIUS, ORIENTATION_RADIUS + 1),
                               np.arange(-ORIENTATION_RADIUS, ORIENTATION_RADIUS + 1),
                               indexing="ij")
_ORI_KEEP = (_ORI_DX ** 2 + _ORI_DY ** 2) <= ORIENTATION_RADIUS ** 2
_ORI_DX = _ORI_DX[_ORI_KEEP]
_ORI_DY = _ORI_DY[_ORI_KEEP]

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


@dataclass(frozen=True)
class FeaturePoint:
    pixel: tuple[float, float]
    descriptor: np.ndarray  # (32,) uint8, 256 bits
    depth_m: float
    point3d: np.ndarray     # (3,) float64, camera-local
    response: float
    angle: float


def _box_blur5(img: np.ndarray) -> np.ndarray:
    """5x5 box blur with edge clamping; stabilizes descriptor samples."""
    pad = np.pad(img, 2, mode="edge").astype(np.float64)
    ii = np.zeros((pad.shape[0] + 1, pad.shape[1] + 1))
    ii[1:, 1:] = pad.cumsum(0).cumsum(1)
    h, w = img.shape
    return (ii[5:5 + h, 5:5 + w] - ii[:h, 5:5 + w]
            - ii[5:5 + h, :w] + ii[:h, :w]) / 25.0


def _local_maxima(scores: np.ndarray, radius: int) -> np.ndarray:
    neigh = scores.copy()
    h, w = scores.shape
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dx == 0 and dy == 0:
                continue
            ys0, ys1 = max(0, dy), min(h, h + dy)
            xs0, xs1 = max(0, dx), min(w, w + dx)
            np.maximum(neigh[ys0:ys1, xs0:xs1],
                       scores[ys0 - dy:ys1 - dy, xs0 - dx:xs1 - dx],
                       out=neigh[ys0:ys1, xs0:xs1])
    return (scores >= neigh) & (scores > 0)


def _harris_response(gray: np.ndarray, sigma: float = 0.8, k: float = 0.04
                     ) -> np.ndarray:
    """Harris corner measure; localizes the corner the segment test found."""
    g = gray.astype(np.float64)
    gx = np.zeros_like(g)
    gy = np.zeros_like(g)
    gx[:, 1:-1] = (g[:, 2:] - g[:, :-2]) * 0.5
    gy[1:-1, :] = (g[2:, :] - g[:-2, :]) * 0.5
    r = int(np.ceil(3 * sigma))
    x = np.arange(-r, r + 1)
    kern = np.exp(-(x * x) / (2 * sigma * sigma))
    kern /= kern.sum()

    def smooth(img):
        pad = np.pad(img, r, mode="edge")
        tmp = np.zeros_like(pad)
        for i, kv in enumerate(kern):
            tmp[:, r:-r] += kv * pad[:, i:i + img.shape[1]]
        out = np.zeros_like(img)
        for i, kv in enumerate(kern):
            out += kv * tmp[i:i + img.shape[0], r:-r]
        return out

    sxx = smooth(gx * gx)
    syy = smooth(gy * gy)
    sxy = smooth(gx * gy)
    return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


def extract_features(frame: RgbdFrame, intrinsics: CameraIntrinsics,
                     max_features: int = 500, fast_threshold: int = 20,
                     nms_radius: int = 3) -> list[FeaturePoint]:
    """Detect corners and describe them; textureless frames yield [].

    Only pixels with valid depth survive (the 3D position is part of the
    feature); results are sorted by corner response, strongest first.
    """
    gray = _luma_u8(frame.color)
    scores = kernels.fast_scores(gray, fast_threshold)
    b = FEATURE_BORDER
    scores[:b, :] = 0
    scores[-b:, :] = 0
    scores[:, :b] = 0
    scores[:, -b:] = 0

    keep = _local_maxima(scores, nms_radius)
    ys, xs = np.nonzero(keep)
    if len(xs) == 0:
        return []
    resp = scores[ys, xs]

    order = np.lexsort((xs, ys, -resp))[:max_features * 2]
    xs, ys, resp = xs[order], ys[order], resp[order]

    # the segment test fires a pixel or two inside the corner; snap to the
    # local Harris peak and refine with a parabola (a pixel of correspondence
    # error is centimeters of 3D error at room depth)
    harris = _harris_response(gray)
    xs, ys = _snap_to_peak(harris, xs, ys, radius=2)
    # snapping can merge neighboring candidates onto one peak; duplicates
    # would later sabotage the matcher's ratio test
    _, uniq = np.unique(ys.astype(np.int64) << 32 | xs.astype(np.int64),
                        return_index=True)
    uniq.sort()
    xs, ys, resp = xs[uniq], ys[uniq], resp[uniq]
    fx_off = _parabolic_offset(harris[ys, xs - 1], harris[ys, xs], harris[ys, xs + 1])
    fy_off = _parabolic_offset(harris[ys - 1, xs], harris[ys, xs], harris[ys + 1, xs])
    xf = xs + fx_off
    yf = ys + fy_off

    depth = _bilinear(frame.depth.astype(np.float64), xf, yf)
    ok = (depth > 0) & ~_on_depth_discontinuity(frame.depth, xs, ys)
    xs, ys, xf, yf, resp, depth = (xs[ok], ys[ok], xf[ok], yf[ok], resp[ok],
                                   depth[ok])
    if len(xs) == 0:
        return []
    xs, ys, xf, yf, resp, depth = (xs[:max_features], ys[:max_features],
                                   xf[:max_features], yf[:max_features],
                                   resp[:max_features], depth[:max_features])

    grayf = gray.astype(np.float64)
    patch = grayf[ys[:, None] + _ORI_DY[None, :], xs[:, None] + _ORI_DX[None, :]]
    m10 = (patch * _ORI_DX[None, :]).sum(axis=1)
    m01 = (patch * _ORI_DY[None, :]).sum(axis=1)
    angles = np.arctan2(m01, m10)

    blur = _box_blur5(grayf)
    c, s = np.cos(angles)[:, None], np.sin(angles)[:, None]
    x1 = np.rint(c * _PATTERN[:, 0] - s * _PATTERN[:, 1]).astype(np.int64)
    y1 = np.rint(s * _PATTERN[:, 0] + c * _PATTERN[:, 1]).astype(np.int64)
    x2 = np.rint(c * _PATTERN[:, 2] - s * _PATTERN[:, 3]).astype(np.int64)
    y2 = np.rint(s * _PATTERN[:, 2] + c * _PATTERN[:, 3]).astype(np.int64)
    va = blur[ys[:, None] + y1, xs[:, None] + x1]
    vb = blur[ys[:, None] + y2, xs[:, None] + x2]
    bits = (va < vb)
    descs = np.packbits(bits, axis=1)

    z = depth * intrinsics.depth_scale
    px = (xf - intrinsics.cx) / intrinsics.fx * z
    py = (yf - intrinsics.cy) / intrinsics.fy * z

    out = []
    for i in range(len(xs)):
        out.append(FeaturePoint(
            pixel=(float(xf[i]), float(yf[i])),
            descriptor=descs[i],
            depth_m=float(z[i]),
            point3d=np.array([px[i], py[i], z[i]]),
            response=float(resp[i]),
            angle=float(angles[i])))
    return out


def _snap_to_peak(response: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                  radius: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Move each point to the strongest response pixel within the radius."""
    offs = np.arange(-radius, radius + 1)
    oy, ox = np.meshgrid(offs, offs, indexing="ij")
    patch = response[ys[:, None] + oy.ravel()[None, :],
                     xs[:, None] + ox.ravel()[None, :]]
    best = patch.argmax(axis=1)
    return xs + ox.ravel()[best], ys + oy.ravel()[best]


def _parabolic_offset(left: np.ndarray, center: np.ndarray,
                      right: np.ndarray) -> np.ndarray:
    denom = left - 2.0 * center + right
    off = np.zeros_like(center, dtype=np.float64)
    ok = np.abs(denom) > 1e-12
    off[ok] = 0.5 * (left[ok] - right[ok]) / denom[ok]
    return np.clip(off, -0.5, 0.5)


def _on_depth_discontinuity(depth: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                            radius: int = 2, max_range_mm: float = 120.0
                            ) -> np.ndarray:
    """True where the local depth window spans a jump (or holes). Silhouette
    features sit on different surface points in every view; their 3D is
    useless for rigid alignment."""
    offs = np.arange(-radius, radius + 1)
    oy, ox = np.meshgrid(offs, offs, indexing="ij")
    win = depth[ys[:, None] + oy.ravel()[None, :],
                xs[:, None] + ox.ravel()[None, :]].astype(np.float64)
    has_hole = (win <= 0).any(axis=1)
    spread = win.max(axis=1) - win.min(axis=1)
    return has_hole | (spread > max_range_mm)


def _bilinear(img: np.ndarray, xf: np.ndarray, yf: np.ndarray) -> np.ndarray:
    """Bilinear sample; 0 when any support pixel is 0 (invalid depth)."""
    x0 = np.floor(xf).astype(np.int64)
    y0 = np.floor(yf).astype(np.int64)
    fx = xf - x0
    fy = yf - y0
    v00 = img[y0, x0]
    v10 = img[y0, x0 + 1]
    v01 = img[y0 + 1, x0]
    v11 = img[y0 + 1, x0 + 1]
    ok = (v00 > 0) & (v10 > 0) & (v01 > 0) & (v11 > 0)
    val = (v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy)
           + v01 * (1 - fx) * fy + v11 * fx * fy)
    return np.where(ok, val, 0.0)


def descriptor_matrix(features: list[FeaturePoint]) -> np.ndarray:
    if not features:
        return np.zeros((0, DESCRIPTOR_BYTES), dtype=np.uint8)
    return np.stack([f.descriptor for f in features])


def hamming_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(N, M) Hamming distance matrix between two descriptor stacks."""
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)), dtype=np.int32)
    return _POPCOUNT[a[:, None, :] ^ b[None, :, :]].sum(axis=2, dtype=np.int32)


def match_features(fa: list[FeaturePoint], fb: list[FeaturePoint],
                   max_distance: int = 64, ratio: float = 0.8
                   ) -> list[tuple[int, int, int]]:
    """Mutual-nearest-neighbor matches with a best/second ratio test.

    Returns (index_a, index_b, distance) triples sorted by distance.
    """
    da, db = descriptor_matrix(fa), descriptor_matrix(fb)
    if len(da) == 0 or len(db) == 0:
        return []
    d = hamming_distances(da, db)
    best_j = d.argmin(axis=1)
    best = d[np.arange(len(da)), best_j]
    if d.shape[1] >= 2:
        dd = d.copy()
        dd[np.arange(len(da)), best_j] = np.iinfo(np.int32).max
        second = dd.min(axis=1)
    else:
        second = np.full(len(da), np.iinfo(np.int32).max)
    best_i = d.argmin(axis=0)

    out = []
    for i in range(len(da)):
        j = best_j[i]
        if best[i] > max_distance:
            continue
        if best[i] > ratio * second[i]:
            continue
        if best_i[j] != i:
            continue
        out.append((i, int(j), int(best[i])))
    out.sort(key=lambda t: (t[2], t[0]))
    return out


def estimate_rigid(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform T with T(src) ~= dst (closed-form SVD)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    r = vt.T @ u.T
    if np.linalg.det(r) < 0:
        vt[2, :] *= -1
        r = vt.T @ u.T
    # re-orthonormalize to absorb float drift before the invariant check
    uu, _, vv = np.linalg.svd(r)
    r = uu @ vv
    return RigidTransform(r, cd - r @ cs)


def _degenerate_sample(pts: np.ndarray) -> bool:
    a = pts[1] - pts[0]
    b = pts[2] - pts[0]
    return float(np.linalg.norm(np.cross(a, b))) < 1e-10


def ransac_rigid(src: np.ndarray, dst: np.ndarray, rng: np.random.Generator,
                 threshold: float = 0.03, iterations: int = 500,
                 min_inlier_ratio: float = 0.3
                 ) -> tuple[RigidTransform, np.ndarray, float]:
    """RANSAC over 3-point rigid hypotheses, refit on the best inlier set.

    Returns (transform, inlier_mask, inlier_rms). Raises
    CalibrationUnreliableError when the inlier ratio lands below the floor.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = len(src)
    if n < 3:
        raise CalibrationUnreliableError(
            f"need >= 3 correspondences, got {n}", count=n)

    best_count = -1
    best_mask = None
    for _ in range(iterations):
        idx = rng.choice(n, size=3, replace=False)
        if _degenerate_sample(src[idx]):
            continue
        t = estimate_rigid(src[idx], dst[idx])
        res = np.linalg.norm(t.apply(src) - dst, axis=1)
        mask = res <= threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask

    if best_mask is None or best_count < 3 or best_count / n < min_inlier_ratio:
        raise CalibrationUnreliableError(
            f"inlier ratio {max(best_count, 0)}/{n} below "
            f"{min_inlier_ratio:.2f}", inliers=int(max(best_count, 0)), total=n)

    t = estimate_rigid(src[best_mask], dst[best_mask])
    res = np.linalg.norm(t.apply(src) - dst, axis=1)
    mask = res <= threshold
    if mask.sum() >= 3:
        t = estimate_rigid(src[mask], dst[mask])
        res = np.linalg.norm(t.apply(src) - dst, axis=1)
        mask = res <= threshold
    rms = float(np.sqrt(np.mean(res[mask] ** 2))) if mask.any() else float("inf")
    return t, mask, rms
