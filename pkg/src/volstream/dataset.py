"""RGB-D directory format:

    <root>/cam<k>/color_<frame:06>.png   8-bit RGB
    <root>/cam<k>/depth_<frame:06>.png   16-bit grayscale, millimeters
    <root>/cam<k>/intrinsics.json        fx, fy, cx, cy, depth_scale
    <root>/ground_truth.json             synthetic sequences only
    <root>/ground_truth_flow.npz         synthetic sequences only (optional)
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError
from .geometry import CameraIntrinsics, RgbdFrame, RigidTransform
from .synthetic import GroundTruth

_CAM_RE = re.compile(r"^cam(\d+)$")
_COLOR_RE = re.compile(r"^color_(\d{6})\.png$")


def write_sequence(root: str | Path, frames_by_camera: dict[int, list[RgbdFrame]],
                   intrinsics: dict[int, CameraIntrinsics],
                   ground_truth: GroundTruth | None = None,
                   frame_period_us: int = 33_333) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for cid, frames in frames_by_camera.items():
        cam_dir = root / f"cam{cid}"
        cam_dir.mkdir(exist_ok=True)
        meta = intrinsics[cid].to_dict()
        meta["frame_period_us"] = frame_period_us
        (cam_dir / "intrinsics.json").write_text(json.dumps(meta, indent=2,
                                                            sort_keys=True))
        for f in frames:
            Image.fromarray(np.asarray(f.color)).save(
                cam_dir / f"color_{f.frame_index:06d}.png")
            depth = Image.fromarray(np.asarray(f.depth))  # uint16 -> I;16
            depth.save(cam_dir / f"depth_{f.frame_index:06d}.png")
    if ground_truth is not None:
        gt = {
            "poses": {str(c): [p.matrix().tolist() for p in per_cam]
                      for c, per_cam in enumerate(ground_truth.poses)},
            "changed": {str(c): ground_truth.changed[c].astype(int).tolist()
                        for c in range(ground_truth.changed.shape[0])},
        }
        (root / "ground_truth.json").write_text(json.dumps(gt, sort_keys=True))
        if ground_truth.flow is not None:
            np.savez_compressed(root / "ground_truth_flow.npz",
                                flow=ground_truth.flow,
                                valid=ground_truth.flow_valid)


def load_sequence(root: str | Path
                  ) -> tuple[dict[int, list[RgbdFrame]], dict[int, CameraIntrinsics]]:
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"dataset directory not found: {root}", path=str(root))
    cams = sorted((int(m.group(1)), p) for p in root.iterdir()
                  if p.is_dir() and (m := _CAM_RE.match(p.name)))
    if not cams:
        raise ConfigError(f"no cam<k> directories under {root}", path=str(root))

    frames_by_camera: dict[int, list[RgbdFrame]] = {}
    intrinsics: dict[int, CameraIntrinsics] = {}
    for cid, cam_dir in cams:
        meta_path = cam_dir / "intrinsics.json"
        if not meta_path.is_file():
            raise ConfigError(f"missing {meta_path}", path=str(meta_path))
        meta = json.loads(meta_path.read_text())
        intrinsics[cid] = CameraIntrinsics.from_dict(meta)
        period = int(meta.get("frame_period_us", 33_333))

        indices = sorted(int(m.group(1)) for p in cam_dir.iterdir()
                         if (m := _COLOR_RE.match(p.name)))
        if not indices:
            raise ConfigError(f"no color frames in {cam_dir}", path=str(cam_dir))
        frames = []
        for fi in indices:
            color = np.asarray(Image.open(cam_dir / f"color_{fi:06d}.png").convert("RGB"))
            depth_path = cam_dir / f"depth_{fi:06d}.png"
            if not depth_path.is_file():
                raise ConfigError(f"missing depth frame {depth_path}",
                                  path=str(depth_path))
            depth = np.asarray(Image.open(depth_path))
            if depth.dtype != np.uint16:
                depth = depth.astype(np.int64).clip(0, 65535).astype(np.uint16)
            frames.append(RgbdFrame(camera_id=cid, frame_index=fi,
                                    timestamp_us=fi * period,
                                    color=color, depth=depth))
        frames_by_camera[cid] = frames
    return frames_by_camera, intrinsics


def load_ground_truth_poses(root: str | Path) -> dict[int, list[RigidTransform]]:
    path = Path(root) / "ground_truth.json"
    if not path.is_file():
        raise ConfigError(f"no ground_truth.json under {root}", path=str(path))
    data = json.loads(path.read_text())
    return {int(c): [RigidTransform.from_matrix(np.asarray(m)) for m in mats]
            for c, mats in data["poses"].items()}
