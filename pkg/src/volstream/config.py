"""Pipeline configuration: one flat dataclass, JSON on disk, validated on
load. parse -> serialize -> parse is the identity."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 7

    # capture source
    source_kind: str = "synthetic"        # synthetic | directory
    scene_preset: str = "default"         # default | static | moving-box
    scene_frames: int = 240
    scene_width: int = 192
    scene_height: int = 192
    depth_jitter_mm: float = 2.0          # experiment default; 0 = noiseless
    dataset_dir: str | None = None

    # tiling and change detection
    tile_n: int = 8
    flow_window: int = 5
    flow_stride: int = 4
    flow_eps_eig: float = 1e-4
    lambda_depth: float = 10.0

    # calibration
    calibration_mode: str = "features"    # features | ground-truth
    anchor_camera: int = 0

    # adaptation curves
    bandwidth_anchors_bps: tuple[float, ...] = (20e6, 50e6, 100e6)
    reuse_targets: tuple[float, ...] = (0.85, 0.74, 0.70)
    theta_anchors: tuple[float, ...] | None = None  # None = calibrate
    budget_anchors: tuple[int, ...] = (8_000, 9_000, 10_000)

    # transport
    tick_us: int = 33_333
    bandwidth_bps: float = 100e6
    bandwidths_bps: tuple[float, ...] = (20e6, 50e6, 100e6)
    selective: bool = True
    viewport_adapt: bool = True
    clients: int = 1
    predictor: str = "constant-velocity"
    feedback_period_us: int = 50_000
    segment_ttl_us: int = 2_000_000
    recon_cost_us_per_point: float = 0.7
    tick_overhead_us: int = 2_000
    render_delay_us: int = 4_000

    # scripted client viewpoint
    client_position: tuple[float, float, float] = (0.0, 0.2, 1.0)
    client_yaw_amplitude_deg: float = 50.0
    client_yaw_period_s: float = 6.0
    client_fov_deg: float = 90.0

    # evaluation
    mssim_samples: int = 4
    view_count: int = 6
    splat_radius_px: int = 2

    output_dir: str = "out"

    def validate(self) -> None:
        if self.source_kind not in ("synthetic", "directory"):
            raise ConfigError(f"unknown source_kind {self.source_kind!r}")
        if self.source_kind == "directory":
            if not self.dataset_dir:
                raise ConfigError("directory source needs dataset_dir")
            if not Path(self.dataset_dir).is_dir():
                raise ConfigError(f"dataset_dir does not exist: {self.dataset_dir}",
                                  path=self.dataset_dir)
        if self.tile_n < 1:
            raise ConfigError(f"tile_n must be >= 1, got {self.tile_n}")
        if self.flow_window < 3 or self.flow_window % 2 == 0:
            raise ConfigError(f"flow_window must be odd >= 3, got {self.flow_window}")
        if self.flow_stride < 1:
            raise ConfigError("flow_stride must be >= 1")
        if self.scene_width % self.tile_n or self.scene_height % self.tile_n:
            raise ConfigError("scene dims must be divisible by tile_n")
        if self.calibration_mode not in ("features", "ground-truth"):
            raise ConfigError(f"unknown calibration_mode {self.calibration_mode!r}")
        if len(self.bandwidth_anchors_bps) != len(self.budget_anchors):
            raise ConfigError("bandwidth and budget anchor lists must match")
        if self.theta_anchors is not None and \
                len(self.theta_anchors) != len(self.bandwidth_anchors_bps):
            raise ConfigError("theta anchors must match bandwidth anchors")
        if self.tick_us <= 0 or self.bandwidth_bps <= 0:
            raise ConfigError("tick_us and bandwidth_bps must be positive")
        if self.clients < 1:
            raise ConfigError("clients must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            v = d[f.name]
            if isinstance(v, list):
                v = tuple(v)
            kwargs[f.name] = v
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}", path=str(p))
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}", path=str(p))
        return cls.from_dict(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")
