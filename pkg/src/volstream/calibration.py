"""Multi-camera self-calibration: feature-based anchor alignment at startup,
optical-flow pose tracking afterwards, with automatic fallback to a full
re-match when tracking starves.

All poses map camera coordinates into the anchor camera's frame; the anchor
itself is pinned to the identity at all times.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationUnreliableError, InsufficientMatchesError
from .features import (FeaturePoint, extract_features, match_features,
                       ransac_rigid)
from .geometry import CameraIntrinsics, RgbdFrame, RigidTransform
from .optflow import flow_margin, lk_flow_points, to_gray


@dataclass(frozen=True)
class CalibrationConfig:
    max_features: int = 800
    fast_threshold: int = 20
    match_max_distance: int = 64
    match_ratio: float = 0.8
    min_matches: int = 20
    ransac_threshold_m: float = 0.03
    ransac_iterations: int = 500
    min_inlier_ratio: float = 0.3
    track_window: int = 9
    track_grad_order: int = 4
    max_track_flow_px: float = 8.0
    min_tracked: int = 12
    refresh_interval: int = 300


@dataclass
class TrackedSet:
    """Feature positions being tracked for one camera, refreshed every frame."""

    pixels: np.ndarray   # (K, 2) float64, x/y in the latest processed frame
    points: np.ndarray   # (K, 3) float64, camera-local 3D at that frame


@dataclass
class CalibrationState:
    anchor_id: int
    config: CalibrationConfig
    intrinsics: dict[int, CameraIntrinsics]
    poses: dict[int, RigidTransform] = field(default_factory=dict)
    tracked: dict[int, TrackedSet] = field(default_factory=dict)
    last_full_calibration_frame: dict[int, int] = field(default_factory=dict)
    stale: set[int] = field(default_factory=set)
    stats: dict[int, dict] = field(default_factory=dict)
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def is_stale(self, camera_id: int) -> bool:
        return camera_id in self.stale

    def report(self) -> dict:
        """JSON-ready calibration report: pose, inliers, residual RMS per camera."""
        cams = {}
        for cid in sorted(self.poses):
            st = self.stats.get(cid, {})
            cams[str(cid)] = {
                "pose": self.poses[cid].matrix().tolist(),
                "inlier_count": st.get("inliers", 0),
                "residual_rms_m": st.get("rms", 0.0),
                "method": st.get("method", "anchor"),
                "stale": cid in self.stale,
            }
        return {"anchor_id": self.anchor_id, "cameras": cams}


def _tracked_from_features(feats: list[FeaturePoint]) -> TrackedSet:
    if not feats:
        return TrackedSet(np.zeros((0, 2)), np.zeros((0, 3)))
    return TrackedSet(np.array([f.pixel for f in feats], dtype=np.float64),
                      np.stack([f.point3d for f in feats]))


def _pairwise_transform(feats_child, feats_parent, cfg, rng):
    """Transform taking the child camera's coordinates into the parent's.

    Returns (transform | None, match_count, inliers, rms, reliable): an edge
    with enough matches but an inconsistent geometry comes back as
    (None, ..., reliable=False) so the caller can route around it.
    """
    matches = match_features(feats_parent, feats_child,
                             max_distance=cfg.match_max_distance,
                             ratio=cfg.match_ratio)
    if len(matches) < cfg.min_matches:
        return None, len(matches), 0, 0.0, True
    src = np.stack([feats_child[j].point3d for _, j, _ in matches])
    dst = np.stack([feats_parent[i].point3d for i, _, _ in matches])
    try:
        t, mask, rms = ransac_rigid(src, dst, rng,
                                    threshold=cfg.ransac_threshold_m,
                                    iterations=cfg.ransac_iterations,
                                    min_inlier_ratio=cfg.min_inlier_ratio)
    except CalibrationUnreliableError:
        return None, len(matches), 0, 0.0, False
    return t, len(matches), int(mask.sum()), rms, True


def initial_calibrate(features_per_camera: dict[int, list[FeaturePoint]],
                      anchor_id: int,
                      intrinsics: dict[int, CameraIntrinsics],
                      config: CalibrationConfig | None = None,
                      seed: int = 0,
                      frame_index: int = 0) -> CalibrationState:
    """Align every camera to the anchor through pairwise feature matches.

    Cameras that do not share enough matches with the anchor directly are
    chained through intermediate cameras by transform composition; a camera
    unreachable even transitively raises InsufficientMatchesError.
    """
    cfg = config or CalibrationConfig()
    if anchor_id not in features_per_camera:
        raise InsufficientMatchesError(f"anchor camera {anchor_id} has no features",
                                       camera_id=anchor_id, matches=0)
    state = CalibrationState(anchor_id=anchor_id, config=cfg,
                             intrinsics=dict(intrinsics),
                             rng=np.random.default_rng(seed))
    state.poses[anchor_id] = RigidTransform.identity()
    state.stats[anchor_id] = {"method": "anchor", "inliers": 0, "rms": 0.0}
    for cid, feats in features_per_camera.items():
        state.tracked[cid] = _tracked_from_features(feats)
        state.last_full_calibration_frame[cid] = frame_index

    pending = set(features_per_camera) - {anchor_id}
    visited = [anchor_id]
    best_counts: dict[int, int] = {cid: 0 for cid in pending}
    unreliable: set[int] = set()
    while pending:
        progress = False
        for parent in list(visited):
            for child in sorted(pending):
                t, n_matches, inliers, rms, reliable = _pairwise_transform(
                    features_per_camera[child], features_per_camera[parent],
                    cfg, state.rng)
                best_counts[child] = max(best_counts[child], n_matches)
                if not reliable:
                    unreliable.add(child)
                if t is None:
                    continue
                state.poses[child] = state.poses[parent].compose(t)
                state.stats[child] = {
                    "method": "initial" if parent == anchor_id else "chained",
                    "inliers": inliers, "rms": rms, "via": parent,
                    "matches": n_matches,
                }
                pending.discard(child)
                visited.append(child)
                progress = True
        if not progress:
            worst = min(pending)
            if worst in unreliable:
                raise CalibrationUnreliableError(
                    f"camera {worst} has matches but no rigid-consistent "
                    f"alignment to the calibration chain", camera_id=worst,
                    matches=best_counts[worst])
            raise InsufficientMatchesError(
                f"camera {worst} shares only {best_counts[worst]} matches with "
                f"the calibration chain (need {cfg.min_matches})",
                camera_id=worst, matches=best_counts[worst])
    return state


def _refresh_against_anchor(state: CalibrationState, camera_id: int,
                            cur_frame: RgbdFrame, anchor_frame: RgbdFrame,
                            frame_index: int) -> bool:
    cfg = state.config
    feats_cam = extract_features(cur_frame, state.intrinsics[camera_id],
                                 max_features=cfg.max_features,
                                 fast_threshold=cfg.fast_threshold)
    feats_anchor = extract_features(anchor_frame, state.intrinsics[state.anchor_id],
                                    max_features=cfg.max_features,
                                    fast_threshold=cfg.fast_threshold)
    t, n_matches, inliers, rms, _ = _pairwise_transform(
        feats_cam, feats_anchor, cfg, state.rng)
    if t is None:
        return False
    state.poses[camera_id] = t
    state.tracked[camera_id] = _tracked_from_features(feats_cam)
    state.last_full_calibration_frame[camera_id] = frame_index
    state.stale.discard(camera_id)
    state.stats[camera_id] = {"method": "refreshed", "inliers": inliers,
                              "rms": rms, "matches": n_matches}
    return True


def track_pose(state: CalibrationState, camera_id: int,
               prev_frame: RgbdFrame, cur_frame: RgbdFrame,
               anchor_frame: RgbdFrame | None = None) -> CalibrationState:
    """Advance one camera's pose from prev_frame to cur_frame.

    Tracked features move by per-point LK flow; the surviving 3D pairs feed
    the same RANSAC rigid fit used at startup and the increment is composed
    onto the stored pose. If too few survive, a full re-match against the
    anchor runs (when its concurrent frame is available); failing that the
    camera is marked stale and keeps its last pose.
    """
    cfg = state.config
    intr = state.intrinsics[camera_id]
    frame_index = cur_frame.frame_index
    forced = (anchor_frame is not None
              and frame_index - state.last_full_calibration_frame.get(camera_id, 0)
              >= cfg.refresh_interval)

    tracked = state.tracked.get(camera_id)
    survivors = None
    if tracked is not None and len(tracked.pixels) >= cfg.min_tracked and not forced:
        survivors = _advance_tracked(state, camera_id, tracked, prev_frame, cur_frame)

    if camera_id == state.anchor_id:
        # the anchor defines the frame; only its feature set needs upkeep
        if survivors is None or len(survivors[0]) < cfg.min_tracked:
            feats = extract_features(cur_frame, intr, max_features=cfg.max_features,
                                     fast_threshold=cfg.fast_threshold)
            state.tracked[camera_id] = _tracked_from_features(feats)
            state.last_full_calibration_frame[camera_id] = frame_index
        else:
            state.tracked[camera_id] = TrackedSet(survivors[0], survivors[1])
        state.poses[camera_id] = RigidTransform.identity()
        return state

    if survivors is not None and len(survivors[0]) >= cfg.min_tracked:
        new_pix, p_cur, p_prev = survivors
        try:
            t_inc, mask, rms = ransac_rigid(
                p_cur, p_prev, state.rng,
                threshold=cfg.ransac_threshold_m,
                iterations=cfg.ransac_iterations,
                min_inlier_ratio=cfg.min_inlier_ratio)
        except CalibrationUnreliableError:
            t_inc = None
        if t_inc is not None:
            state.poses[camera_id] = state.poses[camera_id].compose(t_inc)
            state.tracked[camera_id] = TrackedSet(new_pix, p_cur)
            state.stats[camera_id] = {"method": "tracked",
                                      "inliers": int(mask.sum()), "rms": rms}
            state.stale.discard(camera_id)
            return state

    # starved or unreliable: full re-detection against the anchor
    if anchor_frame is not None and _refresh_against_anchor(
            state, camera_id, cur_frame, anchor_frame, frame_index):
        return state
    state.stale.add(camera_id)
    return state


def _advance_tracked(state: CalibrationState, camera_id: int, tracked: TrackedSet,
                     prev_frame: RgbdFrame, cur_frame: RgbdFrame):
    """LK-advance tracked pixels; returns (new_pixels, points_cur, points_prev)
    for survivors, or None when no point could be evaluated."""
    cfg = state.config
    intr = state.intrinsics[camera_id]
    h, w = prev_frame.height, prev_frame.width
    m = flow_margin(cfg.track_window, cfg.track_grad_order)

    px = np.rint(tracked.pixels[:, 0]).astype(np.int64)
    py = np.rint(tracked.pixels[:, 1]).astype(np.int64)
    inside = (px >= m) & (px < w - m) & (py >= m) & (py < h - m)
    if not inside.any():
        return None
    idx = np.nonzero(inside)[0]

    gray_prev = to_gray(prev_frame.color)
    gray_cur = to_gray(cur_frame.color)
    u, v, valid = lk_flow_points(gray_prev, gray_cur, px[idx], py[idx],
                                 window=cfg.track_window,
                                 grad_order=cfg.track_grad_order)
    mag = np.hypot(u, v)
    good = valid & (mag <= cfg.max_track_flow_px)
    idx = idx[good]
    if len(idx) == 0:
        return None

    new_pix = tracked.pixels[idx] + np.column_stack([u[good], v[good]])
    nx = np.rint(new_pix[:, 0]).astype(np.int64)
    ny = np.rint(new_pix[:, 1]).astype(np.int64)
    inb = (nx >= m) & (nx < w - m) & (ny >= m) & (ny < h - m)
    idx, new_pix, nx, ny = idx[inb], new_pix[inb], nx[inb], ny[inb]
    if len(idx) == 0:
        return None

    depth = _bilinear_depth(cur_frame.depth, new_pix[:, 0], new_pix[:, 1])
    has_depth = depth > 0
    idx, new_pix = idx[has_depth], new_pix[has_depth]
    depth = depth[has_depth]
    if len(idx) == 0:
        return None

    z = depth * intr.depth_scale
    p_cur = np.column_stack([(new_pix[:, 0] - intr.cx) / intr.fx * z,
                             (new_pix[:, 1] - intr.cy) / intr.fy * z,
                             z])
    return new_pix, p_cur, tracked.points[idx]


def _bilinear_depth(depth: np.ndarray, xf: np.ndarray, yf: np.ndarray) -> np.ndarray:
    """Sub-pixel depth; 0 whenever any of the 4 support pixels is invalid
    (mixing depths across a discontinuity would fabricate 3D points)."""
    x0 = np.floor(xf).astype(np.int64)
    y0 = np.floor(yf).astype(np.int64)
    fx = xf - x0
    fy = yf - y0
    d00 = depth[y0, x0].astype(np.float64)
    d10 = depth[y0, x0 + 1].astype(np.float64)
    d01 = depth[y0 + 1, x0].astype(np.float64)
    d11 = depth[y0 + 1, x0 + 1].astype(np.float64)
    ok = (d00 > 0) & (d10 > 0) & (d01 > 0) & (d11 > 0)
    val = (d00 * (1 - fx) * (1 - fy) + d10 * fx * (1 - fy)
           + d01 * (1 - fx) * fy + d11 * fx * fy)
    return np.where(ok, val, 0.0)


def calibrate_from_frames(frames_by_camera: dict[int, RgbdFrame], anchor_id: int,
                          intrinsics: dict[int, CameraIntrinsics],
                          config: CalibrationConfig | None = None,
                          seed: int = 0) -> CalibrationState:
    """Convenience wrapper: extract features from one frame per camera and run
    the initial alignment."""
    cfg = config or CalibrationConfig()
    feats = {cid: extract_features(f, intrinsics[cid],
                                   max_features=cfg.max_features,
                                   fast_threshold=cfg.fast_threshold)
             for cid, f in frames_by_camera.items()}
    first = next(iter(frames_by_camera.values()))
    return initial_calibrate(feats, anchor_id, intrinsics, config=cfg, seed=seed,
                             frame_index=first.frame_index)
