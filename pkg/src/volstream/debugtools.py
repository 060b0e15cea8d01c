"""Inspection helpers: per-tile change-score heatmaps as PGM images."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import TileGrid
from .optflow import TileChangeMask, tile_change_mask


def write_pgm(path: str | Path, values: np.ndarray) -> None:
    """8-bit binary PGM (P5)."""
    data = np.asarray(values, dtype=np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(data.tobytes())


def heatmap_image(mask: TileChangeMask, cell_px: int = 16) -> np.ndarray:
    """Blow the per-tile scores up into a viewable grid image, normalized to
    the frame's own maximum."""
    n = mask.grid.n
    grid = mask.d_c.reshape(n, n)
    peak = grid.max()
    norm = grid / peak if peak > 0 else grid
    img = np.rint(norm * 255).astype(np.uint8)
    return np.kron(img, np.ones((cell_px, cell_px), dtype=np.uint8))


def dump_change_heatmaps(frames_by_camera, grid: TileGrid, out_dir: str | Path,
                         theta: float = 0.0, stride: int = 4,
                         window: int = 5, eps_eig: float = 1e-4,
                         lambda_depth: float = 10.0,
                         limit_frames: int | None = None) -> list[Path]:
    """One PGM per (camera, frame pair); returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for cid in sorted(frames_by_camera):
        frames = frames_by_camera[cid]
        last = len(frames) if limit_frames is None else min(len(frames),
                                                            limit_frames + 1)
        for f in range(1, last):
            mask = tile_change_mask(frames[f - 1], frames[f], grid, theta,
                                    stride=stride, window=window,
                                    eps_eig=eps_eig, lambda_depth=lambda_depth)
            path = out / f"dc_cam{cid}_frame{f:06d}.pgm"
            write_pgm(path, heatmap_image(mask))
            written.append(path)
    return written
