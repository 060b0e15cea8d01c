"""Deterministic synthetic multi-camera RGB-D sequences with exact ground truth.

Scenes are analytic primitives (axis-aligned boxes and spheres) rendered by
ray casting, so depth, per-tile change flags, and dense optical flow come out
exact. Textures are functions of object-local coordinates, which makes
brightness constancy hold exactly under object translation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .geometry import (CameraIntrinsics, RgbdFrame, RigidTransform, TileGrid,
                       forward_project, rotation_about)

_NEAR = 0.05  # minimum hit distance (m); avoids self-hits at the origin
_LIGHT = np.array([-0.35, -0.80, 0.49])
_LIGHT_DIR = _LIGHT / np.linalg.norm(_LIGHT)


# ---------------------------------------------------------------------------
# motion scripts

@dataclass(frozen=True)
class Motion:
    """Translation offset as a function of frame index.

    kind 'static': zero. kind 'linear': velocity * frame. kind 'sine':
    amplitude * sin(2*pi*(frame + phase) / period), per axis.
    """

    kind: str = "static"
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    amplitude: tuple[float, float, float] = (0.0, 0.0, 0.0)
    period_frames: float = 60.0
    phase_frames: float = 0.0

    def offset(self, frame: int) -> np.ndarray:
        if self.kind == "static":
            return np.zeros(3)
        if self.kind == "linear":
            return np.asarray(self.velocity, dtype=np.float64) * frame
        if self.kind == "sine":
            a = np.asarray(self.amplitude, dtype=np.float64)
            return a * np.sin(2.0 * np.pi * (frame + self.phase_frames)
                              / self.period_frames)
        raise ConfigError(f"unknown motion kind {self.kind!r}")

    @property
    def is_static(self) -> bool:
        if self.kind == "static":
            return True
        if self.kind == "linear":
            return not any(self.velocity)
        if self.kind == "sine":
            return not any(self.amplitude)
        return False

    def to_dict(self) -> dict:
        return {"kind": self.kind, "velocity": list(self.velocity),
                "amplitude": list(self.amplitude),
                "period_frames": self.period_frames,
                "phase_frames": self.phase_frames}

    @classmethod
    def from_dict(cls, d: dict) -> "Motion":
        return cls(kind=d.get("kind", "static"),
                   velocity=tuple(d.get("velocity", (0, 0, 0))),
                   amplitude=tuple(d.get("amplitude", (0, 0, 0))),
                   period_frames=float(d.get("period_frames", 60.0)),
                   phase_frames=float(d.get("phase_frames", 0.0)))


# ---------------------------------------------------------------------------
# scene specification

@dataclass(frozen=True)
class SceneObject:
    """Textured primitive: 'box' (axis-aligned) or 'sphere'.

    size: half-extents (3) for boxes, (radius, 0, 0) for spheres.
    texture: 'checker' (classic two-color squares), 'blocks' (dark squares on
    a bright base; rich in corner features), or 'plaid' (smooth sinusoidal;
    friendly to sub-pixel flow). period_m is the texture period in meters;
    soft_m smooths checker/blocks edges over that many meters.
    """

    kind: str
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    motion: Motion = field(default_factory=Motion)
    texture: str = "checker"
    period_m: float = 0.08
    soft_m: float = 0.0
    color_a: tuple[int, int, int] = (230, 225, 215)
    color_b: tuple[int, int, int] = (60, 70, 90)
    texture_seed: int = 0      # salts the per-cell hash of 'blocks'
    blocks_jitter: float = 1.0  # 0 = uniform blocks (analytic corners)

    def position(self, frame: int) -> np.ndarray:
        return np.asarray(self.center, dtype=np.float64) + self.motion.offset(frame)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "center": list(self.center),
                "size": list(self.size), "motion": self.motion.to_dict(),
                "texture": self.texture, "period_m": self.period_m,
                "soft_m": self.soft_m, "color_a": list(self.color_a),
                "color_b": list(self.color_b), "texture_seed": self.texture_seed,
                "blocks_jitter": self.blocks_jitter}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneObject":
        return cls(kind=d["kind"], center=tuple(d["center"]), size=tuple(d["size"]),
                   motion=Motion.from_dict(d.get("motion", {})),
                   texture=d.get("texture", "checker"),
                   period_m=float(d.get("period_m", 0.08)),
                   soft_m=float(d.get("soft_m", 0.0)),
                   color_a=tuple(d.get("color_a", (230, 225, 215))),
                   color_b=tuple(d.get("color_b", (60, 70, 90))),
                   texture_seed=int(d.get("texture_seed", 0)),
                   blocks_jitter=float(d.get("blocks_jitter", 1.0)))


@dataclass(frozen=True)
class SceneCamera:
    intrinsics: CameraIntrinsics
    pose: RigidTransform          # camera -> anchor at frame 0
    motion: Motion = field(default_factory=Motion)  # translation in anchor frame
    yaw_rate: float = 0.0         # radians/frame about the camera's own y axis

    def pose_at(self, frame: int) -> RigidTransform:
        rot = self.pose.rotation
        if self.yaw_rate:
            rot = rot @ rotation_about("y", self.yaw_rate * frame)
        return RigidTransform(rot, self.pose.translation + self.motion.offset(frame))


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    duration_frames: int
    width: int
    height: int
    tile_n: int
    cameras: tuple[SceneCamera, ...]
    objects: tuple[SceneObject, ...]
    depth_jitter_mm: float = 0.0   # uniform +/- jitter on valid depth, 0 = off
    record_flow: bool = True
    frame_period_us: int = 33_333

    def grid(self) -> TileGrid:
        return TileGrid.for_image(self.width, self.height, self.tile_n)

    def validate(self, strict: bool = False) -> None:
        if not self.cameras or not self.objects or self.duration_frames < 1:
            raise ConfigError("scene needs >= 1 camera, >= 1 object, >= 1 frame",
                              cameras=len(self.cameras), objects=len(self.objects))
        if self.width % self.tile_n or self.height % self.tile_n:
            raise DimensionMismatchError(
                f"{self.width}x{self.height} not divisible by tile grid {self.tile_n}")
        if strict:
            if len(self.cameras) < 2:
                raise ConfigError("strict scene needs >= 2 cameras")
            statics = [o for o in self.objects if o.motion.is_static]
            movers = [o for o in self.objects if not o.motion.is_static]
            if not statics or not movers:
                raise ConfigError("strict scene needs a static and a moving object")


@dataclass
class GroundTruth:
    """Exact per-frame truth: camera poses, per-tile change flags, dense flow.

    changed[c][f] covers tile indices row-major; frame 0 is all-True (cold
    start). flow[c][f] maps each frame f-1 pixel to its frame f displacement
    (the true motion field, occlusions ignored); flow_valid marks pixels that
    hit any surface in frame f-1.
    """

    poses: list[list[RigidTransform]]
    changed: np.ndarray            # (C, F, N*N) bool
    flow: np.ndarray | None        # (C, F, H, W, 2) float32; [.., 0]=u, [.., 1]=v
    flow_valid: np.ndarray | None  # (C, F, H, W) bool


# ---------------------------------------------------------------------------
# ray casting

def _ray_dirs(intr: CameraIntrinsics, width: int, height: int) -> np.ndarray:
    """Un-normalized camera-frame ray directions; the ray parameter equals
    camera-frame z, so a hit at parameter s has depth exactly s."""
    xs = (np.arange(width) - intr.cx) / intr.fx
    ys = (np.arange(height) - intr.cy) / intr.fy
    dx, dy = np.meshgrid(xs, ys)
    return np.stack([dx, dy, np.ones_like(dx)], axis=-1)


def _intersect_sphere(origin, dirs, center, radius):
    oc = origin - center
    a = np.einsum("hwc,hwc->hw", dirs, dirs)
    b = 2.0 * np.einsum("hwc,c->hw", dirs, oc)
    c = oc @ oc - radius * radius
    disc = b * b - 4.0 * a * c
    hit = disc >= 0.0
    s = np.full(dirs.shape[:2], np.inf)
    sq = np.sqrt(np.where(hit, disc, 0.0))
    s_near = (-b - sq) / (2.0 * a)
    s_far = (-b + sq) / (2.0 * a)
    cand = np.where(s_near > _NEAR, s_near, s_far)
    s = np.where(hit & (cand > _NEAR), cand, np.inf)
    return s


def _intersect_box(origin, dirs, center, half):
    lo = center - half
    hi = center + half
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origin) / dirs
        t2 = (hi - origin) / dirs
    tmin = np.nanmax(np.minimum(t1, t2), axis=-1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=-1)
    hit = (tmax >= tmin) & (tmax > _NEAR)
    cand = np.where(tmin > _NEAR, tmin, tmax)
    return np.where(hit & (cand > _NEAR), cand, np.inf)


def _box_normal_axis(local: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Index of the face axis each local hit point lies on (max |l|/h)."""
    rel = np.abs(local) / half
    return np.argmax(rel, axis=-1)


def _cell_hash(i: np.ndarray, j: np.ndarray, salt: int) -> np.ndarray:
    """Deterministic per-cell 64-bit hash (splitmix64 finalizer)."""
    with np.errstate(over="ignore"):
        h = (i.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
             ^ j.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
             ^ np.uint64(salt * 0xD6E8FEB86659FD93 & 0xFFFFFFFFFFFFFFFF))
        h ^= h >> np.uint64(30)
        h *= np.uint64(0xBF58476D1CE4E5B9)
        h ^= h >> np.uint64(27)
        h *= np.uint64(0x94D049BB133111EB)
        h ^= h >> np.uint64(31)
    return h


def blocks_cell_params(obj: SceneObject, i: np.ndarray, j: np.ndarray):
    """(present, half_width_frac, darkness, center_u_frac, center_v_frac) of
    the dark square in cell (i, j).

    Shared with tests so analytic corner positions can be derived. Size,
    shade, and in-cell position all vary per cell (hash-driven) so that no
    two neighborhoods look alike to a binary descriptor.
    """
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    if obj.blocks_jitter <= 0:
        present = np.ones(i.shape, dtype=bool)
        return (present, np.full(i.shape, 0.22), np.zeros(i.shape),
                np.full(i.shape, 0.5), np.full(i.shape, 0.5))
    h = _cell_hash(i, j, obj.texture_seed)

    def bits(shift):
        return (((h >> np.uint64(shift)) & np.uint64(0xFFF)).astype(np.float64)
                / 4095.0)

    jit = obj.blocks_jitter
    present = bits(0) < 0.85
    half_width = 0.20 + jit * 0.12 * (bits(12) - 0.5)
    darkness = jit * 0.25 * bits(24)
    cu = 0.5 + jit * 0.36 * (bits(36) - 0.5)
    cv = 0.5 + jit * 0.36 * (bits(48) - 0.5)
    return present, half_width, darkness, cu, cv


def _texture_value(obj: SceneObject, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Blend factor in [0,1] between color_b (0) and color_a (1)."""
    p = obj.period_m
    if obj.texture == "plaid":
        return 0.5 + 0.25 * np.sin(2 * np.pi * u / p) + 0.25 * np.sin(2 * np.pi * v / p)
    if obj.texture == "blocks":
        iu = np.floor(u / p).astype(np.int64)
        iv = np.floor(v / p).astype(np.int64)
        fu = u / p - iu
        fv = v / p - iv
        present, half_width, darkness, cu, cv = blocks_cell_params(obj, iu, iv)
        d = np.maximum(np.abs(fu - cu), np.abs(fv - cv))
        if obj.soft_m > 0:
            ramp = np.clip((d - half_width) / (obj.soft_m / p), 0.0, 1.0)
        else:
            ramp = (d >= half_width).astype(np.float64)
        return np.where(present, darkness + (1.0 - darkness) * ramp, 1.0)
    # checker: product of two square waves; soft_m turns the cell-boundary
    # step into a linear ramp of roughly that width. Cell shades get a small
    # hash jitter so the pattern never repeats exactly (local descriptors
    # cannot tell identical cells apart).
    su = np.sin(np.pi * u / p)
    sv = np.sin(np.pi * v / p)
    if obj.soft_m > 0:
        k = p / (np.pi * obj.soft_m)
        fu_w = np.clip(su * k, -1.0, 1.0)
        fv_w = np.clip(sv * k, -1.0, 1.0)
    else:
        fu_w = np.sign(su)
        fv_w = np.sign(sv)
    blend = 0.5 * (1.0 + fu_w * fv_w)
    if obj.blocks_jitter > 0:
        iu = np.floor(u / p).astype(np.int64)
        iv = np.floor(v / p).astype(np.int64)
        h = _cell_hash(iu, iv, obj.texture_seed)
        r = ((h & np.uint64(0xFFF)).astype(np.float64)) / 4095.0
        shift = obj.blocks_jitter * 0.3 * (r - 0.5)
        blend = np.clip(blend + shift, 0.0, 1.0)
    return blend


def _shade(obj: SceneObject, blend: np.ndarray, normal: np.ndarray) -> np.ndarray:
    ca = np.asarray(obj.color_a, dtype=np.float64)
    cb = np.asarray(obj.color_b, dtype=np.float64)
    base = blend[..., None] * ca + (1 - blend[..., None]) * cb
    lam = np.maximum(0.0, normal @ _LIGHT_DIR)
    factor = 0.55 + 0.45 * lam
    return base * factor[..., None]


def _render_one(spec: SceneSpec, cam: SceneCamera, frame: int):
    """Raycast a single camera/frame. Returns (color u8, depth_m f64,
    obj_id i16, local f64 (H,W,3))."""
    pose = cam.pose_at(frame)
    origin = pose.translation
    dirs = _ray_dirs(cam.intrinsics, spec.width, spec.height) @ pose.rotation.T

    h, w = spec.height, spec.width
    depth = np.full((h, w), np.inf)
    obj_id = np.full((h, w), -1, dtype=np.int16)
    for k, obj in enumerate(spec.objects):
        pos = obj.position(frame)
        if obj.kind == "sphere":
            s = _intersect_sphere(origin, dirs, pos, obj.size[0])
        elif obj.kind == "box":
            s = _intersect_box(origin, dirs, pos, np.asarray(obj.size))
        else:
            raise ConfigError(f"unknown object kind {obj.kind!r}")
        closer = s < depth
        depth[closer] = s[closer]
        obj_id[closer] = k

    hit = obj_id >= 0
    points = origin + dirs * np.where(hit, depth, 0.0)[..., None]
    local = np.zeros((h, w, 3))
    color = np.zeros((h, w, 3))
    for k, obj in enumerate(spec.objects):
        m = obj_id == k
        if not m.any():
            continue
        pos = obj.position(frame)
        loc = points[m] - pos
        local[m] = loc
        if obj.kind == "sphere":
            r = obj.size[0]
            normal = loc / r
            u = np.arctan2(loc[:, 2], loc[:, 0]) * r
            v = np.arccos(np.clip(loc[:, 1] / r, -1, 1)) * r
        else:
            half = np.asarray(obj.size)
            axis = _box_normal_axis(loc, half)
            normal = np.zeros_like(loc)
            rows = np.arange(len(loc))
            normal[rows, axis] = np.sign(loc[rows, axis])
            uv_axes = np.array([[1, 2], [0, 2], [0, 1]])[axis]
            u = loc[rows, uv_axes[:, 0]]
            v = loc[rows, uv_axes[:, 1]]
        blend = _texture_value(obj, u, v)
        color[m] = _shade(obj, blend, normal)

    depth_m = np.where(hit, depth, 0.0)
    color_u8 = np.clip(np.rint(color), 0, 255).astype(np.uint8)
    return color_u8, depth_m, obj_id, local


def _quantize_depth(depth_m: np.ndarray, jitter_mm: float,
                    rng: np.random.Generator | None) -> np.ndarray:
    mm = depth_m * 1000.0
    if jitter_mm > 0 and rng is not None:
        noise = rng.uniform(-jitter_mm, jitter_mm, size=mm.shape)
        mm = np.where(mm > 0, mm + noise, 0.0)
    return np.clip(np.rint(mm), 0, 65535).astype(np.uint16)


# ---------------------------------------------------------------------------
# sequence rendering

def render_sequence(spec: SceneSpec) -> tuple[list[list[RgbdFrame]], GroundTruth]:
    """Render all cameras over all frames and derive exact ground truth."""
    spec.validate()
    grid = spec.grid()
    n_cam = len(spec.cameras)
    n_frm = spec.duration_frames
    h, w = spec.height, spec.width

    frames: list[list[RgbdFrame]] = [[] for _ in range(n_cam)]
    poses: list[list[RigidTransform]] = [[] for _ in range(n_cam)]
    changed = np.zeros((n_cam, n_frm, grid.num_tiles), dtype=bool)
    flow = np.zeros((n_cam, n_frm, h, w, 2), dtype=np.float32) if spec.record_flow else None
    flow_valid = np.zeros((n_cam, n_frm, h, w), dtype=bool) if spec.record_flow else None

    px_grid = np.stack(np.meshgrid(np.arange(w, dtype=np.float64),
                                   np.arange(h, dtype=np.float64)), axis=-1)

    for ci, cam in enumerate(spec.cameras):
        prev_color = prev_depth_raw = None
        prev_obj = prev_local = None
        for f in range(n_frm):
            color, depth_m, obj_id, local = _render_one(spec, cam, f)
            rng = (np.random.default_rng((spec.seed, ci, f))
                   if spec.depth_jitter_mm > 0 else None)
            depth_raw = _quantize_depth(depth_m, spec.depth_jitter_mm, rng)
            clean_raw = (_quantize_depth(depth_m, 0.0, None)
                         if spec.depth_jitter_mm > 0 else depth_raw)
            pose = cam.pose_at(f)
            poses[ci].append(pose)
            frames[ci].append(RgbdFrame(
                camera_id=ci, frame_index=f,
                timestamp_us=f * spec.frame_period_us,
                color=color, depth=depth_raw))

            if f == 0:
                changed[ci, 0, :] = True
            else:
                diff = (color != prev_color).any(axis=-1) | (clean_raw != prev_depth_raw)
                tiles = diff.reshape(grid.n, grid.tile_height, grid.n, grid.tile_width)
                changed[ci, f, :] = tiles.any(axis=(1, 3)).reshape(-1)

                if spec.record_flow:
                    hit = prev_obj >= 0
                    pos_now = np.array([o.position(f) for o in spec.objects])
                    world = np.where(
                        hit[..., None],
                        pos_now[np.clip(prev_obj, 0, None).astype(np.int64)] + prev_local,
                        0.0)
                    uv, z = forward_project(world.reshape(-1, 3), cam.intrinsics, pose)
                    uv = uv.reshape(h, w, 2)
                    ok = hit & (z.reshape(h, w) > 0)
                    flow[ci, f][ok] = (uv - px_grid)[ok].astype(np.float32)
                    flow_valid[ci, f] = ok

            prev_color, prev_depth_raw = color, clean_raw
            prev_obj, prev_local = obj_id, local

    return frames, GroundTruth(poses=poses, changed=changed,
                               flow=flow, flow_valid=flow_valid)
