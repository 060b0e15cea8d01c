"""Ready-made scene specifications.

These are the desk-scale stand-ins for a real multi-camera capture rig: a
walled scene with static furniture plus a few moving objects, observed by
cameras with overlapping fields of view. Tests and the default experiment
configuration build on them.
"""

from __future__ import annotations

import numpy as np

from .geometry import CameraIntrinsics, RigidTransform, look_at
from .synthetic import Motion, SceneCamera, SceneObject, SceneSpec

SCENE_CENTER = (0.0, 0.3, 1.6)


def desk_intrinsics(width: int = 192, height: int = 192) -> CameraIntrinsics:
    return CameraIntrinsics(fx=140.0, fy=140.0, cx=width / 2.0, cy=height / 2.0)


def _room_shell() -> list[SceneObject]:
    wall = dict(texture="blocks", period_m=0.26, soft_m=0.015,
                color_a=(210, 205, 195), color_b=(55, 60, 75))
    # the floor is seen at grazing angles where corner texture foreshortens
    # into ambiguous stripes; keep it smooth like a real floor
    floor = SceneObject("box", center=(0.0, 1.0, 1.6), size=(2.6, 0.1, 2.6),
                        texture="plaid", period_m=0.5,
                        color_a=(150, 148, 140), color_b=(95, 96, 100))
    return [
        floor,
        SceneObject("box", center=(0.0, 0.0, 3.4), size=(2.6, 2.0, 0.1),
                    texture_seed=2, **wall),
        SceneObject("box", center=(-2.2, 0.0, 1.6), size=(0.1, 2.0, 2.6),
                    texture_seed=3, **wall),
        SceneObject("box", center=(2.2, 0.0, 1.6), size=(0.1, 2.0, 2.6),
                    texture_seed=4, **wall),
    ]


def _furniture() -> list[SceneObject]:
    return [
        SceneObject("box", center=(0.0, 0.62, 1.6), size=(0.55, 0.28, 0.32),
                    texture="checker", period_m=0.09, soft_m=0.008,
                    color_a=(235, 220, 180), color_b=(90, 60, 40),
                    texture_seed=11),
        SceneObject("sphere", center=(-0.62, 0.30, 1.45), size=(0.13, 0.0, 0.0),
                    texture="checker", period_m=0.07, soft_m=0.006,
                    color_a=(200, 230, 210), color_b=(40, 90, 70),
                    texture_seed=12),
        # shelf against the back wall: big front-parallel matchable area
        SceneObject("box", center=(0.85, 0.05, 3.05), size=(0.5, 0.6, 0.12),
                    texture="blocks", period_m=0.14, soft_m=0.012,
                    color_a=(225, 212, 188), color_b=(70, 55, 45),
                    texture_seed=13),
        SceneObject("box", center=(-0.95, 0.15, 2.95), size=(0.4, 0.5, 0.1),
                    texture="blocks", period_m=0.13, soft_m=0.012,
                    color_a=(200, 215, 230), color_b=(50, 62, 85),
                    texture_seed=14),
    ]


def _movers() -> list[SceneObject]:
    return [
        SceneObject("sphere", center=(0.38, 0.08, 1.50), size=(0.09, 0.0, 0.0),
                    motion=Motion(kind="sine", amplitude=(0.28, 0.06, 0.12),
                                  period_frames=48.0),
                    texture="checker", period_m=0.06, soft_m=0.006,
                    color_a=(240, 120, 90), color_b=(120, 30, 20)),
        SceneObject("box", center=(-0.32, 0.02, 1.85), size=(0.08, 0.08, 0.08),
                    motion=Motion(kind="sine", amplitude=(0.24, 0.12, 0.0),
                                  period_frames=72.0, phase_frames=11.0),
                    texture="checker", period_m=0.055, soft_m=0.005,
                    color_a=(140, 170, 255), color_b=(30, 40, 110)),
        SceneObject("sphere", center=(0.05, -0.18, 1.45), size=(0.06, 0.0, 0.0),
                    motion=Motion(kind="sine", amplitude=(0.15, 0.13, 0.16),
                                  period_frames=30.0, phase_frames=4.0),
                    texture="checker", period_m=0.05, soft_m=0.005,
                    color_a=(250, 235, 120), color_b=(120, 100, 20)),
    ]


def arc_eye(degrees: float, center=SCENE_CENTER) -> tuple[float, float, float]:
    """Camera position on the horizontal arc through the origin around the
    scene center (pure relative yaw; descriptor matching stays reliable)."""
    c = np.asarray(center, dtype=np.float64)
    from .geometry import rotation_about
    return tuple(c + rotation_about("y", np.deg2rad(degrees)) @ (-c))


def default_camera_rig(width: int = 192, height: int = 192) -> list[SceneCamera]:
    intr = desk_intrinsics(width, height)
    return [
        SceneCamera(intr, RigidTransform.identity()),
        SceneCamera(intr, look_at(arc_eye(16.0), SCENE_CENTER)),
        SceneCamera(intr, look_at(arc_eye(-16.0), SCENE_CENTER)),
    ]


def default_scene(seed: int = 7, frames: int = 90, width: int = 192,
                  height: int = 192, tile_n: int = 8,
                  depth_jitter_mm: float = 0.0, record_flow: bool = True) -> SceneSpec:
    """Three cameras around a desk: room shell, static furniture, three movers."""
    return SceneSpec(
        seed=seed, duration_frames=frames, width=width, height=height,
        tile_n=tile_n,
        cameras=tuple(default_camera_rig(width, height)),
        objects=tuple(_room_shell() + _furniture() + _movers()),
        depth_jitter_mm=depth_jitter_mm, record_flow=record_flow)


def static_scene(seed: int = 3, frames: int = 11, width: int = 128,
                 height: int = 128, tile_n: int = 8, cameras: int = 1) -> SceneSpec:
    """Nothing moves; every frame after the first is bit-identical."""
    intr = CameraIntrinsics(fx=110.0, fy=110.0, cx=width / 2, cy=height / 2)
    cams = [SceneCamera(intr, RigidTransform.identity())]
    if cameras > 1:
        cams.append(SceneCamera(intr, look_at((0.9, -0.1, 0.4), SCENE_CENTER)))
    return SceneSpec(
        seed=seed, duration_frames=frames, width=width, height=height,
        tile_n=tile_n, cameras=tuple(cams[:cameras]),
        objects=tuple(_room_shell() + _furniture()))


def moving_box_scene(seed: int = 11, frames: int = 12, width: int = 128,
                     height: int = 128, tile_n: int = 8,
                     velocity: tuple[float, float, float] = (0.012, 0.0, 0.0),
                     ) -> SceneSpec:
    """One checkered box sliding in front of a textured backdrop, one camera.

    The box stays well inside the image so every truly-changed tile carries
    measurable flow or depth evidence.
    """
    intr = CameraIntrinsics(fx=110.0, fy=110.0, cx=width / 2, cy=height / 2)
    backdrop = SceneObject("box", center=(0.0, 0.0, 3.0), size=(2.5, 2.5, 0.1),
                           texture="checker", period_m=0.18, soft_m=0.01,
                           color_a=(215, 210, 200), color_b=(70, 75, 90))
    box = SceneObject("box", center=(-0.12, 0.05, 1.5), size=(0.16, 0.13, 0.10),
                      motion=Motion(kind="linear", velocity=velocity),
                      texture="checker", period_m=0.055, soft_m=0.005,
                      color_a=(235, 140, 90), color_b=(110, 40, 20))
    return SceneSpec(seed=seed, duration_frames=frames, width=width,
                     height=height, tile_n=tile_n,
                     cameras=(SceneCamera(intr, RigidTransform.identity()),),
                     objects=(backdrop, box))


def flow_plane_scene(px_per_frame: float, direction: str = "x", seed: int = 5,
                     frames: int = 4, width: int = 160, height: int = 160,
                     tile_n: int = 8) -> SceneSpec:
    """A smooth plaid plane translating a known number of pixels per frame.

    The plane is front-parallel at depth z0, so world velocity
    px_per_frame * z0 / fx maps to exactly px_per_frame pixels of image
    motion on its interior.
    """
    intr = CameraIntrinsics(fx=120.0, fy=120.0, cx=width / 2, cy=height / 2)
    z0 = 2.0
    step = px_per_frame * z0 / intr.fx
    vel = (step, 0.0, 0.0) if direction == "x" else (0.0, step, 0.0)
    plane = SceneObject("box", center=(0.0, 0.0, z0 + 0.05), size=(3.0, 3.0, 0.05),
                        motion=Motion(kind="linear", velocity=vel),
                        texture="plaid", period_m=0.80,
                        color_a=(245, 245, 245), color_b=(25, 25, 25))
    return SceneSpec(seed=seed, duration_frames=frames, width=width,
                     height=height, tile_n=tile_n,
                     cameras=(SceneCamera(intr, RigidTransform.identity()),),
                     objects=(plane,))


def two_camera_rig_scene(seed: int = 13, frames: int = 2, width: int = 192,
                         height: int = 192, tile_n: int = 8,
                         yaw_deg: float = 15.0, baseline_m: float = 0.5,
                         cam1_motion: Motion | None = None,
                         cam1_yaw_rate: float = 0.0,
                         with_mover: bool = False) -> SceneSpec:
    """Anchor camera plus a second camera offset by a known yaw/baseline.

    Static by default: pose tracking treats scene features as fixed world
    references, so calibration-accuracy scenes keep movers out.
    """
    intr = desk_intrinsics(width, height)
    yaw = np.deg2rad(yaw_deg)
    # rotate about y toward the scene so the views overlap
    from .geometry import rotation_about
    pose1 = RigidTransform(rotation_about("y", -yaw),
                           np.array([baseline_m, 0.0, 0.0]))
    cams = (SceneCamera(intr, RigidTransform.identity()),
            SceneCamera(intr, pose1, motion=cam1_motion or Motion(),
                        yaw_rate=cam1_yaw_rate))
    objects = _room_shell() + _furniture() + (_movers()[:1] if with_mover else [])
    return SceneSpec(seed=seed, duration_frames=frames, width=width,
                     height=height, tile_n=tile_n, cameras=cams,
                     objects=tuple(objects))


def three_camera_chain_scene(seed: int = 17, frames: int = 2, width: int = 192,
                             height: int = 192) -> SceneSpec:
    """A(anchor)-B-C arc where C overlaps B strongly but A only weakly, so
    C's pose must chain through B."""
    intr = desk_intrinsics(width, height)
    cams = (
        SceneCamera(intr, RigidTransform.identity()),
        SceneCamera(intr, look_at(arc_eye(20.0), SCENE_CENTER)),
        SceneCamera(intr, look_at(arc_eye(40.0), SCENE_CENTER)),
    )
    return SceneSpec(seed=seed, duration_frames=frames, width=width,
                     height=height, tile_n=8, cameras=cams,
                     objects=tuple(_room_shell() + _furniture()))
