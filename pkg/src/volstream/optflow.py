"""Sparse Lucas-Kanade optical flow and tile-level change detection.

The per-point solve inverts the 2x2 structure tensor of window-summed
gradient products; degenerate neighborhoods (aperture problem) are flagged
invalid rather than solved. Tile change scores integrate flow magnitude on a
sparse lattice, rescaled by stride^2 to approximate the dense per-pixel sum,
plus a depth-difference term that catches motion along the optical axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatchError, StreamError
from .geometry import RgbdFrame, TileGrid

DEFAULT_WINDOW = 5
DEFAULT_EPS_EIG = 1e-4
DEFAULT_STRIDE = 4
DEFAULT_LAMBDA_DEPTH = 10.0  # score units per meter of depth change

_LUMA = np.array([0.299, 0.587, 0.114])


def to_gray(color: np.ndarray) -> np.ndarray:
    """8-bit RGB -> luma in [0, 1], float64."""
    return (color.astype(np.float64) @ _LUMA) / 255.0


@dataclass(frozen=True)
class FlowVector:
    u: float
    v: float
    valid: bool

    @property
    def magnitude(self) -> float:
        return float(np.hypot(self.u, self.v))


@dataclass(frozen=True)
class StructureTensor:
    """Window-summed gradient products around one pixel."""

    e_x: float
    e_y: float
    e_xy: float
    e_xt: float
    e_yt: float

    @property
    def lambda_min(self) -> float:
        half_tr = (self.e_x + self.e_y) / 2.0
        disc = np.sqrt(((self.e_x - self.e_y) / 2.0) ** 2 + self.e_xy ** 2)
        return float(half_tr - disc)


@dataclass(frozen=True)
class TileChangeMask:
    """Per-tile cumulative change score and the verdicts it implies."""

    grid: TileGrid
    d_c: np.ndarray      # (n*n,) float64, >= 0
    changed: np.ndarray  # (n*n,) bool, d_c > theta
    theta: float

    def __post_init__(self):
        d_c = np.asarray(self.d_c, dtype=np.float64)
        changed = np.asarray(self.changed, dtype=bool)
        if (d_c < 0).any():
            raise StreamError("d_c must be non-negative")
        if not np.array_equal(changed, d_c > self.theta):
            raise StreamError("changed flags must equal d_c > theta")
        object.__setattr__(self, "d_c", d_c)
        object.__setattr__(self, "changed", changed)

    @property
    def changed_count(self) -> int:
        return int(self.changed.sum())


def _check_pair(prev: np.ndarray, cur: np.ndarray) -> None:
    if prev.shape != cur.shape:
        raise DimensionMismatchError(
            f"frame shapes differ: {prev.shape} vs {cur.shape}")


def flow_margin(window: int, grad_order: int = 2) -> int:
    """Minimum distance from the border for a solvable point (window sum plus
    the central-difference stencil reach)."""
    return window // 2 + grad_order // 2


def structure_tensor_at(prev: np.ndarray, cur: np.ndarray, x: int, y: int,
                        window: int = DEFAULT_WINDOW) -> StructureTensor:
    """Direct (unvectorized) tensor computation; used mostly by tests."""
    half = window // 2
    e = np.zeros(5)
    for wy in range(y - half, y + half + 1):
        for wx in range(x - half, x + half + 1):
            gx = (prev[wy, wx + 1] - prev[wy, wx - 1]) / 2.0
            gy = (prev[wy + 1, wx] - prev[wy - 1, wx]) / 2.0
            dt = cur[wy, wx] - prev[wy, wx]
            e += [gx * gx, gy * gy, gx * gy, gx * dt, gy * dt]
    return StructureTensor(*e)


def lk_flow_at(prev: np.ndarray, cur: np.ndarray, p: tuple[int, int],
               window: int = DEFAULT_WINDOW,
               eps_eig: float = DEFAULT_EPS_EIG) -> FlowVector:
    """Flow at a single pixel (x, y) of two grayscale images in [0, 1]."""
    _check_pair(prev, cur)
    if window < 3 or window % 2 == 0:
        raise StreamError(f"window must be odd and >= 3, got {window}")
    x, y = int(p[0]), int(p[1])
    m = flow_margin(window)
    h, w = prev.shape
    if not (m <= x < w - m and m <= y < h - m):
        raise StreamError(
            f"point ({x}, {y}) too close to the border for window {window}",
            x=x, y=y, window=window, width=w, height=h)
    u, v, valid = kernels.lk_points(prev, cur, np.array([x]), np.array([y]),
                                    window, eps_eig)
    return FlowVector(float(u[0]), float(v[0]), bool(valid[0]))


def lk_flow_points(prev: np.ndarray, cur: np.ndarray, xs: np.ndarray,
                   ys: np.ndarray, window: int = DEFAULT_WINDOW,
                   eps_eig: float = DEFAULT_EPS_EIG, grad_order: int = 2):
    """Vector form of lk_flow_at; callers must keep points inside the margin.

    grad_order=4 swaps the spatial derivative for the 5-tap fourth-order
    central difference, trading one extra border pixel for a much flatter
    frequency response (used by pose tracking, where flow bias accumulates).
    """
    _check_pair(prev, cur)
    return kernels.lk_points(prev, cur, np.asarray(xs, dtype=np.int64),
                             np.asarray(ys, dtype=np.int64), window, eps_eig,
                             grad_order)


def _lattice_offsets(tile_px: int, stride: int) -> np.ndarray:
    return np.arange(stride // 2, tile_px, stride, dtype=np.int64)


def tile_change_mask(prev: RgbdFrame, cur: RgbdFrame, grid: TileGrid,
                     theta: float, stride: int = DEFAULT_STRIDE,
                     window: int = DEFAULT_WINDOW,
                     eps_eig: float = DEFAULT_EPS_EIG,
                     lambda_depth: float = DEFAULT_LAMBDA_DEPTH) -> TileChangeMask:
    """Score every tile of a consecutive frame pair and compare against theta.

    Flow magnitudes are summed over the lattice points whose LK solve is
    valid (invalid points carry no motion evidence and contribute zero); the
    depth term sums |depth difference| in meters where both samples are
    valid. Both sums are scaled by stride^2 so scores are comparable across
    stride settings.
    """
    if stride < 1:
        raise StreamError(f"stride must be >= 1, got {stride}")
    if theta < 0:
        raise StreamError(f"theta must be >= 0, got {theta}")
    if (prev.width, prev.height) != (cur.width, cur.height):
        raise DimensionMismatchError(
            f"frame dims differ: {prev.width}x{prev.height} vs {cur.width}x{cur.height}",
            camera_id=cur.camera_id)
    if grid.width != cur.width or grid.height != cur.height:
        raise DimensionMismatchError(
            f"grid {grid.width}x{grid.height} does not match frame "
            f"{cur.width}x{cur.height}", camera_id=cur.camera_id)

    gray_prev = to_gray(prev.color)
    gray_cur = to_gray(cur.color)

    # lattice: identical offsets inside every tile
    offs_x = _lattice_offsets(grid.tile_width, stride)
    offs_y = _lattice_offsets(grid.tile_height, stride)
    tile_x0 = np.arange(grid.n, dtype=np.int64) * grid.tile_width
    tile_y0 = np.arange(grid.n, dtype=np.int64) * grid.tile_height
    xs_all = (tile_x0[:, None] + offs_x[None, :]).reshape(-1)  # per tile column
    ys_all = (tile_y0[:, None] + offs_y[None, :]).reshape(-1)

    gx, gy = np.meshgrid(xs_all, ys_all)  # every lattice point in the image
    pts_x = gx.reshape(-1)
    pts_y = gy.reshape(-1)
    tile_col = pts_x // grid.tile_width
    tile_row = pts_y // grid.tile_height
    tile_idx = tile_row * grid.n + tile_col

    # flow is solvable only where the window (plus derivative stencil) stays
    # inside the point's own tile: windows crossing a tile boundary would
    # smear one tile's motion into its neighbor's score. The depth term below
    # is pointwise and still covers the border band.
    m = flow_margin(window)
    off_x_in = pts_x - tile_col * grid.tile_width
    off_y_in = pts_y - tile_row * grid.tile_height
    solvable = ((off_x_in >= m) & (off_x_in < grid.tile_width - m)
                & (off_y_in >= m) & (off_y_in < grid.tile_height - m))

    mag = np.zeros(len(pts_x))
    if solvable.any():
        u, v, valid = kernels.lk_points(gray_prev, gray_cur,
                                        pts_x[solvable], pts_y[solvable],
                                        window, eps_eig)
        mm = np.zeros(len(u))
        mm[valid] = np.hypot(u[valid], v[valid])
        mag[solvable] = mm

    scale = float(stride * stride)
    d_c = np.bincount(tile_idx, weights=mag, minlength=grid.num_tiles) * scale

    if lambda_depth > 0:
        # pointwise, so evaluated densely whatever the stride: depth edges are
        # 1-2 px wide and subsampling them would make scores stride-unstable
        dp = prev.depth.astype(np.float64)
        dc_ = cur.depth.astype(np.float64)
        ddiff = np.where((dp > 0) & (dc_ > 0), np.abs(dc_ - dp), 0.0) * 1e-3
        per_tile = ddiff.reshape(grid.n, grid.tile_height,
                                 grid.n, grid.tile_width).sum(axis=(1, 3))
        d_c = d_c + per_tile.reshape(-1) * lambda_depth

    return TileChangeMask(grid=grid, d_c=d_c, changed=d_c > theta, theta=theta)
