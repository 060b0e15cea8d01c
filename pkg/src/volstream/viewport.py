"""Client viewport handling: trajectory history, next-step gaze prediction,
the widened 120-degree eligibility range, and center-out density falloff.

Angles follow the y-down anchor convention: yaw 0 looks along +z, positive
yaw turns toward +x, positive pitch looks up (toward -y).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .geometry import ScenePointCloud

PREDICTION_RANGE_H = np.deg2rad(120.0)  # fixed eligibility arc
PREDICTION_RANGE_V = np.deg2rad(90.0)
CORE_ANGLE = np.deg2rad(30.0)           # full density inside this cone
EDGE_ANGLE = np.deg2rad(60.0)           # eligibility edge (half of 120)
EDGE_WEIGHT = 0.2


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = np.remainder(a + np.pi, 2 * np.pi) - np.pi
    return float(np.pi) if w == -np.pi else float(w)


def gaze_direction(yaw: float, pitch: float) -> np.ndarray:
    cp = np.cos(pitch)
    return np.array([cp * np.sin(yaw), -np.sin(pitch), cp * np.cos(yaw)])


@dataclass(frozen=True)
class ViewportState:
    timestamp_us: int
    position: tuple[float, float, float]
    yaw: float
    pitch: float
    fov_h: float = np.deg2rad(90.0)

    def __post_init__(self):
        if not (-np.pi / 2 <= self.pitch <= np.pi / 2):
            raise ValueError(f"pitch {self.pitch} outside [-pi/2, pi/2]")
        if not (0 < self.fov_h < np.pi):
            raise ValueError(f"fov_h {self.fov_h} outside (0, pi)")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def gaze(self) -> np.ndarray:
        return gaze_direction(self.yaw, self.pitch)


class ViewportTrajectory:
    """Ring buffer of recent viewport samples; timestamps strictly increase."""

    def __init__(self, capacity: int = 30):
        self._buf: deque[ViewportState] = deque(maxlen=capacity)

    def push(self, state: ViewportState) -> None:
        if self._buf and state.timestamp_us <= self._buf[-1].timestamp_us:
            raise ValueError(
                f"timestamp {state.timestamp_us} not after {self._buf[-1].timestamp_us}")
        self._buf.append(state)

    def __len__(self) -> int:
        return len(self._buf)

    def latest(self) -> ViewportState | None:
        return self._buf[-1] if self._buf else None

    def last_two(self) -> tuple[ViewportState, ViewportState] | None:
        if len(self._buf) < 2:
            return None
        return self._buf[-2], self._buf[-1]


@dataclass(frozen=True)
class PredictedViewport:
    position: tuple[float, float, float]
    yaw: float
    pitch: float
    range_h: float = PREDICTION_RANGE_H
    range_v: float = PREDICTION_RANGE_V
    low_confidence: bool = False

    def gaze(self) -> np.ndarray:
        return gaze_direction(self.yaw, self.pitch)


class Predictor(Protocol):
    def predict(self, traj: ViewportTrajectory, horizon_us: int) -> PredictedViewport: ...


class ConstantVelocityPredictor:
    """Extrapolates angular and positional velocity from the last two samples."""

    def predict(self, traj: ViewportTrajectory, horizon_us: int) -> PredictedViewport:
        pair = traj.last_two()
        if pair is None:
            last = traj.latest()
            if last is None:
                raise ValueError("cannot predict from an empty trajectory")
            return PredictedViewport(position=last.position, yaw=last.yaw,
                                     pitch=last.pitch, low_confidence=True)
        a, b = pair
        dt = b.timestamp_us - a.timestamp_us
        scale = horizon_us / dt
        dyaw = wrap_angle(b.yaw - a.yaw)  # shortest arc
        dpitch = b.pitch - a.pitch
        dpos = np.subtract(b.position, a.position)
        pitch = float(np.clip(b.pitch + dpitch * scale, -np.pi / 2, np.pi / 2))
        return PredictedViewport(
            position=tuple(np.add(b.position, dpos * scale)),
            yaw=wrap_angle(b.yaw + dyaw * scale),
            pitch=pitch)


def make_predictor(name: str = "constant-velocity") -> Predictor:
    if name in ("constant-velocity", "cv", "default"):
        return ConstantVelocityPredictor()
    if name in ("recurrent", "lstm"):
        from .rnn_predictor import RecurrentPredictor
        return RecurrentPredictor()
    raise ValueError(f"unknown predictor {name!r}")


def predict(traj: ViewportTrajectory, horizon_us: int,
            predictor: Predictor | None = None) -> PredictedViewport:
    return (predictor or ConstantVelocityPredictor()).predict(traj, horizon_us)


def density_weight(point_direction: np.ndarray,
                   pred: PredictedViewport) -> float | np.ndarray:
    """Center-out falloff: 1 inside the core cone, linear down to EDGE_WEIGHT
    at the eligibility edge, 0 beyond. Accepts a single direction or (N, 3)."""
    d = np.asarray(point_direction, dtype=np.float64)
    single = d.ndim == 1
    d = d.reshape(-1, 3)
    cosphi = np.clip(d @ pred.gaze(), -1.0, 1.0)
    phi = np.arccos(cosphi)
    t = (phi - CORE_ANGLE) / (EDGE_ANGLE - CORE_ANGLE)
    w = 1.0 + np.clip(t, 0.0, 1.0) * (EDGE_WEIGHT - 1.0)
    w = np.where(phi > EDGE_ANGLE, 0.0, w)
    return float(w[0]) if single else w


def _hash01(indices: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic per-index uniforms in [0, 1) via splitmix64."""
    with np.errstate(over="ignore"):
        h = indices.astype(np.uint64) + np.uint64(
            (seed * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF)
        h ^= h >> np.uint64(30)
        h *= np.uint64(0xBF58476D1CE4E5B9)
        h ^= h >> np.uint64(27)
        h *= np.uint64(0x94D049BB133111EB)
        h ^= h >> np.uint64(31)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def select_indices(positions: np.ndarray, pred: PredictedViewport,
                   budget_points: int, seed: int) -> np.ndarray:
    """Indices of retained points under hash-threshold sampling.

    Each point's keep probability is its density weight rescaled so the
    expected retained count stays within budget; the per-index hash makes the
    selection deterministic and monotone in the budget.
    """
    if budget_points <= 0 or len(positions) == 0:
        return np.zeros(0, dtype=np.int64)
    rel = positions - np.asarray(pred.position, dtype=np.float64)
    norms = np.linalg.norm(rel, axis=1)
    dirs = np.zeros_like(rel)
    ok = norms > 1e-12
    dirs[ok] = rel[ok] / norms[ok, None]
    w = density_weight(dirs, pred)
    w[~ok] = 1.0  # a point at the eye is trivially in view
    total = w.sum()
    if total <= 0:
        return np.zeros(0, dtype=np.int64)
    # uncapped rescale: E[retained] = sum(min(1, w*scale)) <= budget either
    # way, and a generous budget must not thin the falloff zone (full-recall
    # guarantee under perfect prediction)
    scale = budget_points / total
    keep_p = np.minimum(1.0, w * scale)
    h = _hash01(np.arange(len(positions), dtype=np.int64), seed)
    return np.nonzero(h < keep_p)[0].astype(np.int64)


def select_points(scene: ScenePointCloud, pred: PredictedViewport,
                  budget_points: int, seed: int):
    """Flat selection over the fused cloud, as one PointBatch."""
    from .geometry import PointBatch
    merged = scene.merged()
    if len(merged) == 0:
        return PointBatch.empty()
    idx = select_indices(merged.positions, pred, budget_points, seed)
    return PointBatch(merged.positions[idx], merged.colors[idx])


@dataclass(frozen=True)
class SegmentSelection:
    key: tuple[int, int]
    indices: np.ndarray


def select_scene_points(scene: ScenePointCloud, pred: PredictedViewport,
                        budget_points: int, seed: int) -> list[SegmentSelection]:
    """Budgeted per-segment selection over the fused cloud.

    Segments are visited in deterministic (camera, tile) order and share one
    global point enumeration, so the whole-cloud selection equals the
    flat select_indices run and stays monotone in the budget.
    """
    keys = sorted(scene.segments)
    if not keys:
        return []
    sizes = [len(scene.segments[k]) for k in keys]
    if sum(sizes) == 0:
        return []
    positions = np.concatenate(
        [scene.segments[k].positions for k in keys if len(scene.segments[k])])
    chosen = select_indices(positions, pred, budget_points, seed)
    out = []
    offset = 0
    for k, size in zip(keys, sizes):
        if size == 0:
            continue
        in_seg = chosen[(chosen >= offset) & (chosen < offset + size)] - offset
        if len(in_seg):
            out.append(SegmentSelection(key=k, indices=in_seg))
        offset += size
    return out


@dataclass
class TrajectoryRecorder:
    """Owned by the per-client session: single writer, de-duplicates stale
    feedback by timestamp."""

    trajectory: ViewportTrajectory = field(
        default_factory=lambda: ViewportTrajectory(30))
    last_timestamp_us: int = -1

    def ingest(self, state: ViewportState) -> bool:
        if state.timestamp_us <= self.last_timestamp_us:
            return False
        self.trajectory.push(state)
        self.last_timestamp_us = state.timestamp_us
        return True
