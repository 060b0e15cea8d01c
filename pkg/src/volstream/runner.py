"""Glue between configuration and the pipeline pieces: builds scenes, resolves
camera poses, calibrates threshold anchors, and drives simulations. Both the
CLI and the acceptance tests go through these helpers."""

from __future__ import annotations

import numpy as np

from . import presets
from .calibration import calibrate_from_frames
from .config import PipelineConfig
from .dataset import load_ground_truth_poses, load_sequence
from .errors import ConfigError
from .evaluation import run_experiment
from .geometry import TileGrid
from .reconstruction import SelectivePipeline
from .synthetic import GroundTruth, render_sequence
from .transport.adapt import BandwidthController, ThetaCurve, calibrate_theta_anchors
from .transport.session import (ScriptedClient, ScriptedViewpoint,
                                SessionConfig, SimResult, run_simulation)


def build_scene_spec(cfg: PipelineConfig):
    if cfg.scene_preset == "default":
        return presets.default_scene(seed=cfg.seed, frames=cfg.scene_frames,
                                     width=cfg.scene_width,
                                     height=cfg.scene_height, tile_n=cfg.tile_n,
                                     depth_jitter_mm=cfg.depth_jitter_mm,
                                     record_flow=False)
    if cfg.scene_preset == "static":
        return presets.static_scene(seed=cfg.seed, frames=cfg.scene_frames,
                                    width=cfg.scene_width,
                                    height=cfg.scene_height, tile_n=cfg.tile_n)
    if cfg.scene_preset == "moving-box":
        return presets.moving_box_scene(seed=cfg.seed, frames=cfg.scene_frames,
                                        width=cfg.scene_width,
                                        height=cfg.scene_height,
                                        tile_n=cfg.tile_n)
    raise ConfigError(f"unknown scene preset {cfg.scene_preset!r}")


def load_source(cfg: PipelineConfig):
    """(frames_by_camera, intrinsics, grid, ground_truth-or-None)."""
    if cfg.source_kind == "directory":
        frames, intrinsics = load_sequence(cfg.dataset_dir)
        first = next(iter(frames.values()))[0]
        grid = TileGrid.for_image(first.width, first.height, cfg.tile_n)
        return frames, intrinsics, grid, None
    spec = build_scene_spec(cfg)
    frame_lists, gt = render_sequence(spec)
    frames = {cid: lst for cid, lst in enumerate(frame_lists)}
    intrinsics = {cid: cam.intrinsics for cid, cam in enumerate(spec.cameras)}
    return frames, intrinsics, spec.grid(), gt


def resolve_poses(cfg: PipelineConfig, frames_by_camera, intrinsics,
                  ground_truth: GroundTruth | None):
    """Camera poses for reconstruction: self-calibrated from the first frames
    or pulled from ground truth / dataset metadata."""
    if cfg.calibration_mode == "ground-truth":
        if ground_truth is not None:
            return {cid: ground_truth.poses[cid][0] for cid in frames_by_camera}
        if cfg.source_kind == "directory":
            gt_poses = load_ground_truth_poses(cfg.dataset_dir)
            return {cid: gt_poses[cid][0] for cid in frames_by_camera}
        raise ConfigError("ground-truth poses requested but none available")
    first = {cid: lst[0] for cid, lst in frames_by_camera.items()}
    state = calibrate_from_frames(first, cfg.anchor_camera, intrinsics,
                                  seed=cfg.seed)
    return dict(state.poses)


def resolve_theta_curve(cfg: PipelineConfig, frames_by_camera, grid
                        ) -> tuple[ThetaCurve, tuple[float, ...]]:
    """Either the configured anchors or anchors calibrated from the sequence's
    change-score distribution (reuse targets hit by quantile inversion)."""
    from .evaluation import collect_change_scores
    if cfg.theta_anchors is not None:
        curve = ThetaCurve(bandwidth_anchors_bps=cfg.bandwidth_anchors_bps,
                           theta_anchors=cfg.theta_anchors)
        return curve, (float("nan"),) * len(cfg.theta_anchors)
    samples, first_tiles = collect_change_scores(
        frames_by_camera, grid, stride=cfg.flow_stride, window=cfg.flow_window,
        eps_eig=cfg.flow_eps_eig, lambda_depth=cfg.lambda_depth)
    thetas, achieved = calibrate_theta_anchors(samples, first_tiles,
                                               targets=cfg.reuse_targets)
    curve = ThetaCurve(bandwidth_anchors_bps=cfg.bandwidth_anchors_bps,
                       theta_anchors=thetas)
    return curve, achieved


def make_clients(cfg: PipelineConfig) -> list[ScriptedClient]:
    out = []
    for i in range(cfg.clients):
        script = ScriptedViewpoint(
            position=cfg.client_position,
            yaw0=0.1 * i,
            yaw_amplitude=np.deg2rad(cfg.client_yaw_amplitude_deg),
            yaw_period_us=int(cfg.client_yaw_period_s * 1e6),
            fov_h=np.deg2rad(cfg.client_fov_deg))
        out.append(ScriptedClient(script,
                                  feedback_period_us=cfg.feedback_period_us,
                                  render_delay_us=cfg.render_delay_us,
                                  ttl_us=cfg.segment_ttl_us))
    return out


def session_config_from(cfg: PipelineConfig, selective: bool | None = None,
                        viewport_adapt: bool | None = None) -> SessionConfig:
    return SessionConfig(
        tick_us=cfg.tick_us,
        selective=cfg.selective if selective is None else selective,
        viewport_adapt=(cfg.viewport_adapt if viewport_adapt is None
                        else viewport_adapt),
        predictor=cfg.predictor,
        segment_ttl_us=cfg.segment_ttl_us,
        selection_seed=cfg.seed)


def simulate(cfg: PipelineConfig, bandwidth_bps: float | None = None,
             selective: bool | None = None,
             viewport_adapt: bool | None = None) -> SimResult:
    """One deterministic virtual-clock run at a single bandwidth."""
    frames, intrinsics, grid, gt = load_source(cfg)
    poses = resolve_poses(cfg, frames, intrinsics, gt)
    curve, _ = resolve_theta_curve(cfg, frames, grid)
    bw = cfg.bandwidth_bps if bandwidth_bps is None else bandwidth_bps
    n_frames = min(len(v) for v in frames.values())

    pipeline = SelectivePipeline(
        intrinsics=intrinsics, poses=poses, theta=0.0,
        stride=cfg.flow_stride, window=cfg.flow_window,
        eps_eig=cfg.flow_eps_eig, lambda_depth=cfg.lambda_depth)
    controllers = [BandwidthController.create(bw, curve,
                                              budget_anchors=cfg.budget_anchors)
                   for _ in range(cfg.clients)]
    return run_simulation(
        pipeline, frames, grid, controllers,
        session_config_from(cfg, selective, viewport_adapt),
        make_clients(cfg), duration_ticks=n_frames,
        recon_cost_us_per_point=cfg.recon_cost_us_per_point,
        tick_overhead_us=cfg.tick_overhead_us)


def evaluate(cfg: PipelineConfig, selective: bool | None = None,
             viewport_adapt: bool | None = None, label: str = "default"):
    """Tables-shaped report across the configured bandwidth settings."""
    frames, intrinsics, grid, gt = load_source(cfg)
    poses = resolve_poses(cfg, frames, intrinsics, gt)
    curve, achieved = resolve_theta_curve(cfg, frames, grid)
    return run_experiment(
        frames, grid, poses, intrinsics,
        bandwidths_bps=cfg.bandwidths_bps, theta_curve=curve,
        budget_anchors=cfg.budget_anchors,
        stride=cfg.flow_stride, window=cfg.flow_window,
        eps_eig=cfg.flow_eps_eig, lambda_depth=cfg.lambda_depth,
        mssim_samples=cfg.mssim_samples,
        session_config=session_config_from(cfg, selective, viewport_adapt),
        clients_factory=lambda: make_clients(cfg),
        recon_cost_us_per_point=cfg.recon_cost_us_per_point,
        label=label, achieved_reuse=achieved)
