"""Quality metrics and the experiment harness: z-buffered point splatting
from predefined viewpoints, SSIM over those renderings, the multi-view
average (MSSIM), and per-bandwidth reports combining reconstruction quality
with transmission performance."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionMismatchError, StreamError
from .geometry import (CameraIntrinsics, PointBatch, RigidTransform,
                       ScenePointCloud, forward_project, look_at)
from .reconstruction import SelectivePipeline, cumulative_reuse, mean_frame_reuse

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class RenderView:
    pose: RigidTransform          # camera -> anchor, like every camera pose
    intrinsics: CameraIntrinsics
    width: int
    height: int
    splat_radius_px: int = 2

    def __post_init__(self):
        if self.splat_radius_px < 1:
            raise ValueError("splat radius must be >= 1")


def render(cloud: PointBatch | list, view: RenderView) -> np.ndarray:
    """Project and splat a point cloud; nearest point wins each pixel."""
    if isinstance(cloud, list):
        cloud = PointBatch.concat(cloud) if cloud and isinstance(cloud[0], PointBatch) \
            else _batch_from_points(cloud)
    if len(cloud) == 0:
        return np.zeros((view.height, view.width, 3), dtype=np.uint8)
    uv, z = forward_project(cloud.positions, view.intrinsics, view.pose)
    front = z > 1e-9
    return kernels.splat_render(uv[front, 0], uv[front, 1], z[front],
                                np.ascontiguousarray(cloud.colors[front]),
                                view.splat_radius_px, view.width, view.height)


def _batch_from_points(points) -> PointBatch:
    if not points:
        return PointBatch.empty()
    return PointBatch(np.stack([p.position for p in points]),
                      np.stack([p.color for p in points]))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _valid_sepconv(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable 2D convolution, 'valid' region only."""
    n = len(k)
    h, w = img.shape
    tmp = np.zeros((h, w - n + 1))
    for i in range(n):
        tmp += k[i] * img[:, i:w - n + 1 + i]
    out = np.zeros((h - n + 1, w - n + 1))
    for i in range(n):
        out += k[i] * tmp[i:h - n + 1 + i, :]
    return out


def _to_luma(img: np.ndarray) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 3:
        a = a @ _LUMA
    return a


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity on luma: 11x11 Gaussian window (sigma 1.5),
    K1=0.01, K2=0.03, dynamic range 255, averaged over window positions."""
    xa, xb = _to_luma(a), _to_luma(b)
    if xa.shape != xb.shape:
        raise DimensionMismatchError(f"image shapes differ: {xa.shape} vs {xb.shape}")
    if min(xa.shape) < SSIM_WINDOW:
        raise DimensionMismatchError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {xa.shape}")
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    k = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    mu_a = _valid_sepconv(xa, k)
    mu_b = _valid_sepconv(xb, k)
    var_a = _valid_sepconv(xa * xa, k) - mu_a * mu_a
    var_b = _valid_sepconv(xb * xb, k) - mu_b * mu_b
    cov = _valid_sepconv(xa * xb, k) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def mssim(reference_cloud, test_cloud, views: list[RenderView]) -> float:
    """Mean SSIM of the two clouds rendered from every predefined view."""
    if not views:
        raise StreamError("mssim needs at least one view")
    vals = [ssim(render(reference_cloud, v), render(test_cloud, v))
            for v in views]
    return float(np.mean(vals))


def ring_views(center, radius: float, count: int = 6, width: int = 192,
               height: int = 192, fx: float = 140.0,
               splat_radius_px: int = 2) -> list[RenderView]:
    """Evenly spaced viewpoints on a horizontal ring looking at the center."""
    intr = CameraIntrinsics(fx=fx, fy=fx, cx=width / 2, cy=height / 2)
    center = np.asarray(center, dtype=np.float64)
    views = []
    for i in range(count):
        a = 2 * np.pi * i / count
        eye = center + radius * np.array([np.sin(a), 0.0, -np.cos(a)])
        views.append(RenderView(pose=look_at(eye, center), intrinsics=intr,
                                width=width, height=height,
                                splat_radius_px=splat_radius_px))
    return views


def default_views_for_cloud(cloud: ScenePointCloud, count: int = 6,
                            **kwargs) -> list[RenderView]:
    merged = cloud.merged()
    if len(merged) == 0:
        raise StreamError("cannot derive views from an empty cloud")
    center = merged.positions.mean(axis=0)
    radius = 1.5 * float(np.linalg.norm(merged.positions - center, axis=1).max())
    return ring_views(center, radius, count=count, **kwargs)


# ---------------------------------------------------------------------------
# experiment runner

@dataclass
class BandwidthReport:
    bandwidth_bps: float
    theta: float
    point_budget: int
    r_reuse: float
    r_reuse_frame_mean: float
    mssim: float
    fps: dict = field(default_factory=dict)
    latency_ms: dict = field(default_factory=dict)
    bytes_sent: int = 0
    frames_acked: int = 0
    skipped_ticks: int = 0
    error: str | None = None


@dataclass
class ExperimentReport:
    rows: list[BandwidthReport]
    theta_anchors: tuple[float, ...]
    achieved_reuse_at_anchors: tuple[float, ...]
    label: str = "default"

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "theta_anchors": list(self.theta_anchors),
            "achieved_reuse_at_anchors": list(self.achieved_reuse_at_anchors),
            "rows": [
                {
                    "bandwidth_mbps": r.bandwidth_bps / 1e6,
                    "theta": r.theta,
                    "point_budget": r.point_budget,
                    "r_reuse": r.r_reuse,
                    "r_reuse_frame_mean": r.r_reuse_frame_mean,
                    "mssim": r.mssim,
                    "fps": r.fps,
                    "latency_ms": r.latency_ms,
                    "bytes_sent": r.bytes_sent,
                    "frames_acked": r.frames_acked,
                    "skipped_ticks": r.skipped_ticks,
                    "error": r.error,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        head = (f"{'Net Condition':<22}{'R_reuse':>9}{'MSSIM':>8}"
                f"{'FPS min':>9}{'avg':>7}{'max':>7}"
                f"{'Lat min':>9}{'avg':>7}{'max':>7}")
        lines = [head, "-" * len(head)]
        for r in self.rows:
            if r.error:
                lines.append(f"{r.bandwidth_bps/1e6:>6.0f} Mbps        ERROR: {r.error}")
                continue
            lines.append(
                f"{r.bandwidth_bps/1e6:>6.0f} Mbps{'':<12}"
                f"{r.r_reuse*100:>8.1f}%{r.mssim:>8.4f}"
                f"{r.fps.get('min', 0):>9.1f}{r.fps.get('avg', 0):>7.1f}"
                f"{r.fps.get('max', 0):>7.1f}"
                f"{r.latency_ms.get('min', 0):>9.0f}{r.latency_ms.get('avg', 0):>7.0f}"
                f"{r.latency_ms.get('max', 0):>7.0f}")
        return "\n".join(lines)


def collect_change_scores(frames_by_camera, grid, stride: int = 4,
                          window: int = 5, eps_eig: float = 1e-4,
                          lambda_depth: float = 10.0):
    """Every per-tile d_c of the sequence (frames after each camera's first),
    plus the count of first-frame tiles. Feeds threshold calibration."""
    from .optflow import tile_change_mask
    samples = []
    first_tiles = 0
    for cid, frames in frames_by_camera.items():
        first_tiles += grid.num_tiles
        for prev, cur in zip(frames[:-1], frames[1:]):
            mask = tile_change_mask(prev, cur, grid, theta=0.0, stride=stride,
                                    window=window, eps_eig=eps_eig,
                                    lambda_depth=lambda_depth)
            samples.append(mask.d_c)
    if not samples:
        raise StreamError("sequence too short to collect change scores")
    return np.concatenate(samples), first_tiles


def _run_recon(frames_by_camera, grid, poses, intrinsics, theta, stride,
               window, eps_eig, lambda_depth, sample_frames, force_all=False):
    """Run the per-camera pipeline over the sequence, snapshotting the fused
    cloud at the sampled frame indices."""
    pipe = SelectivePipeline(intrinsics=intrinsics, poses=poses, theta=theta,
                             stride=stride, window=window, eps_eig=eps_eig,
                             lambda_depth=lambda_depth)
    snaps = {}
    n_frames = min(len(v) for v in frames_by_camera.values())
    for f in range(n_frames):
        for cid in sorted(frames_by_camera):
            pipe.step(frames_by_camera[cid][f], grid, force_all=force_all)
        if f in sample_frames:
            snaps[f] = pipe.scene.snapshot()
    return pipe, snaps


def run_experiment(frames_by_camera, grid, poses, intrinsics,
                   bandwidths_bps, theta_curve, budget_anchors,
                   views: list[RenderView] | None = None,
                   stride: int = 4, window: int = 5, eps_eig: float = 1e-4,
                   lambda_depth: float = 10.0, mssim_samples: int = 4,
                   session_config=None, clients_factory=None,
                   recon_cost_us_per_point: float = 0.5,
                   label: str = "default",
                   achieved_reuse=(float("nan"),) * 3) -> ExperimentReport:
    """Per-bandwidth quality + transmission report (one table row each).

    The MSSIM reference is the full (non-selective) reconstruction of the
    same frames; the test cloud is the selective reconstruction at that
    bandwidth's theta. Transmission rows come from a fresh deterministic
    simulation per bandwidth.
    """
    from .transport.adapt import BandwidthController
    from .transport.session import (ScriptedClient, ScriptedViewpoint,
                                    SessionConfig, run_simulation)

    n_frames = min(len(v) for v in frames_by_camera.values())
    sample_frames = sorted(set(
        np.linspace(1, n_frames - 1, num=min(mssim_samples, n_frames - 1),
                    dtype=int).tolist())) if n_frames > 1 else [0]

    _, full_snaps = _run_recon(frames_by_camera, grid, poses, intrinsics,
                               theta=0.0, stride=stride, window=window,
                               eps_eig=eps_eig, lambda_depth=lambda_depth,
                               sample_frames=sample_frames, force_all=True)
    if views is None:
        views = default_views_for_cloud(full_snaps[sample_frames[-1]])

    rows = []
    for bw in bandwidths_bps:
        try:
            ctrl_probe = BandwidthController.create(bw, theta_curve,
                                                    budget_anchors=budget_anchors)
            theta, budget = ctrl_probe.adapt(bw)

            pipe, sel_snaps = _run_recon(
                frames_by_camera, grid, poses, intrinsics, theta=theta,
                stride=stride, window=window, eps_eig=eps_eig,
                lambda_depth=lambda_depth, sample_frames=sample_frames)
            vals = [mssim(full_snaps[f].merged(), sel_snaps[f].merged(), views)
                    for f in sample_frames]
            quality = float(np.mean(vals))

            sim_pipe = SelectivePipeline(
                intrinsics=intrinsics, poses=poses, theta=theta,
                stride=stride, window=window, eps_eig=eps_eig,
                lambda_depth=lambda_depth)
            cfg = session_config or SessionConfig()
            controller = BandwidthController.create(
                bw, theta_curve, budget_anchors=budget_anchors)
            if clients_factory is None:
                clients = [ScriptedClient(ScriptedViewpoint())]
            else:
                clients = clients_factory()
            result = run_simulation(
                sim_pipe, frames_by_camera, grid, [controller], cfg, clients,
                duration_ticks=n_frames,
                recon_cost_us_per_point=recon_cost_us_per_point)
            summary = result.metrics[0].summary()

            rows.append(BandwidthReport(
                bandwidth_bps=bw, theta=theta, point_budget=budget,
                r_reuse=cumulative_reuse(pipe.updates),
                r_reuse_frame_mean=mean_frame_reuse(pipe.updates),
                mssim=quality,
                fps=summary["fps"], latency_ms=summary["latency_ms"],
                bytes_sent=summary["bytes_sent"],
                frames_acked=summary["frames_acked"],
                skipped_ticks=summary["skipped_ticks"]))
        except StreamError as exc:
            rows.append(BandwidthReport(
                bandwidth_bps=bw, theta=float("nan"), point_budget=0,
                r_reuse=float("nan"), r_reuse_frame_mean=float("nan"),
                mssim=float("nan"), error=str(exc)))
    return ExperimentReport(rows=rows, theta_anchors=theta_curve.theta_anchors,
                            achieved_reuse_at_anchors=tuple(achieved_reuse),
                            label=label)
