"""Core domain types and pinhole/rigid-body geometry.

Conventions, fixed across the whole system and the wire protocol:

* pixel (x, y) = (column, row); x grows right, y grows down.
* camera frame: x right, y down, z forward (optical axis).
* a camera pose is the rigid transform taking camera-frame coordinates into
  the anchor frame: ``p_anchor = R @ p_cam + t``.
* tile indices are row-major in ``[0, n*n)``.
* depth value 0 means invalid and never produces a point.
* geometry is float64 internally; the wire uses float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatchError

_ORTHO_TOL = 1e-6


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics. depth_scale converts raw depth units to meters."""

    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float = 0.001

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if self.depth_scale <= 0:
            raise ValueError("depth_scale must be positive")

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "depth_scale": self.depth_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]),
                   cy=float(d["cy"]), depth_scale=float(d.get("depth_scale", 0.001)))


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation; proper rigid motion (det R = +1)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        err = np.abs(r.T @ r - np.eye(3)).max()
        if err > _ORTHO_TOL:
            raise ValueError(f"rotation not orthonormal (max |R'R - I| = {err:.3g})")
        det = np.linalg.det(r)
        if abs(det - 1.0) > _ORTHO_TOL:
            raise ValueError(f"rotation must have det +1, got {det:.6f}")
        object.__setattr__(self, "rotation", _readonly(r))
        object.__setattr__(self, "translation", _readonly(t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply `other` first, then `self`."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) batch."""
        p = np.asarray(points, dtype=np.float64)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation

    def angular_distance(self, other: "RigidTransform") -> float:
        """Rotation angle (radians) between the two transforms."""
        r = self.rotation.T @ other.rotation
        c = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
        return float(np.arccos(c))

    def translation_distance(self, other: "RigidTransform") -> float:
        return float(np.linalg.norm(self.translation - other.translation))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def invert(a: RigidTransform) -> RigidTransform:
    return a.inverse()


def rotation_about(axis: str, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)
    if axis == "z":
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)
    raise ValueError(f"unknown axis {axis!r}")


def look_at(eye: Sequence[float], target: Sequence[float]) -> RigidTransform:
    """Camera pose at `eye` with the optical axis through `target`.

    Uses the y-down convention: the camera's x axis stays horizontal in the
    anchor frame (anchor 'up' is -y).
    """
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z = z / np.linalg.norm(z)
    up = np.array([0.0, -1.0, 0.0])
    x = np.cross(z, up)
    nx = np.linalg.norm(x)
    if nx < 1e-9:  # looking straight up/down; pick an arbitrary horizontal x
        x = np.array([1.0, 0.0, 0.0])
    else:
        x = x / nx
    y = np.cross(z, x)
    return RigidTransform(np.column_stack([x, y, z]), eye)


def rotation_from_quaternion(q: Sequence[float]) -> np.ndarray:
    """Unit-quaternion (w, x, y, z) to rotation matrix; q is normalized first."""
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@dataclass(frozen=True)
class TileGrid:
    """N×N partition of a camera image; the unit of change detection."""

    n: int
    tile_width: int
    tile_height: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("grid size must be >= 1")
        if self.tile_width < 1 or self.tile_height < 1:
            raise ValueError("tile dimensions must be >= 1")

    @classmethod
    def for_image(cls, width: int, height: int, n: int) -> "TileGrid":
        if n < 1 or width % n or height % n:
            raise DimensionMismatchError(
                f"image {width}x{height} not divisible by grid n={n}",
                width=width, height=height, n=n)
        return cls(n=n, tile_width=width // n, tile_height=height // n)

    @property
    def num_tiles(self) -> int:
        return self.n * self.n

    @property
    def width(self) -> int:
        return self.n * self.tile_width

    @property
    def height(self) -> int:
        return self.n * self.tile_height

    def tile_bounds(self, index: int) -> tuple[int, int, int, int]:
        """(x0, y0, x1, y1) pixel bounds, end-exclusive."""
        row, col = divmod(index, self.n)
        x0, y0 = col * self.tile_width, row * self.tile_height
        return x0, y0, x0 + self.tile_width, y0 + self.tile_height

    def tile_of_pixel(self, x: float, y: float) -> int:
        col = min(int(x) // self.tile_width, self.n - 1)
        row = min(int(y) // self.tile_height, self.n - 1)
        return row * self.n + col


@dataclass
class RgbdFrame:
    """One camera's color+depth capture. Arrays are frozen after construction."""

    camera_id: int
    frame_index: int
    timestamp_us: int
    color: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) uint16, millimeters, 0 = invalid

    def __post_init__(self):
        self.color = np.asarray(self.color, dtype=np.uint8)
        self.depth = np.asarray(self.depth, dtype=np.uint16)
        if self.color.ndim != 3 or self.color.shape[2] != 3:
            raise DimensionMismatchError(
                f"color must be (H, W, 3), got {self.color.shape}",
                camera_id=self.camera_id, frame_index=self.frame_index)
        if self.depth.shape != self.color.shape[:2]:
            raise DimensionMismatchError(
                f"depth {self.depth.shape} does not match color {self.color.shape[:2]}",
                camera_id=self.camera_id, frame_index=self.frame_index)
        self.color.flags.writeable = False
        self.depth.flags.writeable = False

    @property
    def width(self) -> int:
        return self.color.shape[1]

    @property
    def height(self) -> int:
        return self.color.shape[0]


class Point3D(NamedTuple):
    position: np.ndarray  # (3,) float64, anchor frame
    color: np.ndarray     # (3,) uint8


class PointBatch:
    """Column-wise point storage: (N,3) float64 positions + (N,3) uint8 colors."""

    __slots__ = ("positions", "colors")

    def __init__(self, positions: np.ndarray, colors: np.ndarray):
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
        if len(positions) != len(colors):
            raise DimensionMismatchError(
                f"{len(positions)} positions vs {len(colors)} colors")
        self.positions = _readonly(positions)
        self.colors = _readonly(colors)

    @classmethod
    def empty(cls) -> "PointBatch":
        return cls(np.empty((0, 3)), np.empty((0, 3), dtype=np.uint8))

    @classmethod
    def concat(cls, batches: Iterable["PointBatch"]) -> "PointBatch":
        batches = list(batches)
        if not batches:
            return cls.empty()
        return cls(np.concatenate([b.positions for b in batches]),
                   np.concatenate([b.colors for b in batches]))

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i: int) -> Point3D:
        return Point3D(self.positions[i], self.colors[i])

    def __eq__(self, other) -> bool:
        return (isinstance(other, PointBatch)
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.colors, other.colors))

    def __repr__(self) -> str:
        return f"PointBatch({len(self)} points)"


@dataclass
class ScenePointCloud:
    """Persistent fused cloud, segmented per (camera_id, tile_index) for reuse.

    Single-writer: only the synthesis stage mutates an instance; everyone else
    reads published snapshots.
    """

    segments: dict[tuple[int, int], PointBatch] = field(default_factory=dict)
    segment_frame: dict[tuple[int, int], int] = field(default_factory=dict)

    def replace_segment(self, key: tuple[int, int], batch: PointBatch,
                        frame_index: int) -> None:
        prev = self.segment_frame.get(key)
        if prev is not None and frame_index < prev:
            raise ValueError(
                f"segment {key} regeneration frame moved backwards: {prev} -> {frame_index}")
        self.segments[key] = batch
        self.segment_frame[key] = frame_index

    def merged(self) -> PointBatch:
        """Union of all segments in deterministic (camera, tile) order."""
        keys = sorted(self.segments)
        return PointBatch.concat([self.segments[k] for k in keys])

    def total_points(self) -> int:
        return sum(len(b) for b in self.segments.values())

    def snapshot(self) -> "ScenePointCloud":
        """Shallow copy safe to hand to concurrent readers (batches immutable)."""
        return ScenePointCloud(dict(self.segments), dict(self.segment_frame))


def _tile_selector(mask) -> np.ndarray | None:
    """Accept a TileChangeMask, a boolean array, or None (= all tiles)."""
    if mask is None:
        return None
    changed = getattr(mask, "changed", mask)
    return np.asarray(changed, dtype=bool)


def back_project(frame: RgbdFrame, intrinsics: CameraIntrinsics,
                 pose: RigidTransform, grid: TileGrid,
                 mask=None) -> list[tuple[int, PointBatch]]:
    """Back-project selected tiles of an RGB-D frame into the anchor frame.

    Returns one (tile_index, batch) entry per selected tile; tiles excluded by
    the mask yield no entry at all. Pixels with depth 0 yield no point.
    """
    if frame.width != grid.width or frame.height != grid.height:
        raise DimensionMismatchError(
            f"frame {frame.width}x{frame.height} does not match grid "
            f"{grid.width}x{grid.height}",
            camera_id=frame.camera_id, frame_index=frame.frame_index,
            expected=[grid.width, grid.height])
    selector = _tile_selector(mask)
    if selector is not None and len(selector) != grid.num_tiles:
        raise DimensionMismatchError(
            f"mask has {len(selector)} tiles, grid has {grid.num_tiles}")

    xs = np.arange(frame.width, dtype=np.float64)
    ys = np.arange(frame.height, dtype=np.float64)
    out: list[tuple[int, PointBatch]] = []
    for idx in range(grid.num_tiles):
        if selector is not None and not selector[idx]:
            continue
        x0, y0, x1, y1 = grid.tile_bounds(idx)
        depth = frame.depth[y0:y1, x0:x1].astype(np.float64)
        valid = depth > 0
        if not valid.any():
            out.append((idx, PointBatch.empty()))
            continue
        z = depth[valid] * intrinsics.depth_scale
        px, py = np.meshgrid(xs[x0:x1], ys[y0:y1])
        x = (px[valid] - intrinsics.cx) / intrinsics.fx * z
        y = (py[valid] - intrinsics.cy) / intrinsics.fy * z
        pts = pose.apply(np.column_stack([x, y, z]))
        colors = frame.color[y0:y1, x0:x1][valid]
        out.append((idx, PointBatch(pts, colors)))
    return out


def forward_project(points: np.ndarray, intrinsics: CameraIntrinsics,
                    pose: RigidTransform) -> tuple[np.ndarray, np.ndarray]:
    """Project anchor-frame points into a camera with the given pose.

    Returns ((N,2) pixel xy, (N,) camera-frame z). Points behind the camera
    get z <= 0 and unusable pixel coordinates; callers filter on z.
    """
    p_cam = pose.inverse().apply(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    z = p_cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intrinsics.fx * p_cam[:, 0] / z + intrinsics.cx
        v = intrinsics.fy * p_cam[:, 1] / z + intrinsics.cy
    return np.column_stack([u, v]), z
