import numpy as np
import pytest

from volstream.errors import StreamError
from volstream.geometry import ScenePointCloud
from volstream.optflow import tile_change_mask
from volstream.reconstruction import (SelectivePipeline, cumulative_reuse,
                                      mean_frame_reuse, reconstruct_step)


def _pipeline(spec, theta, **kw):
    intr = {c: spec.cameras[c].intrinsics for c in range(len(spec.cameras))}
    poses = {c: spec.cameras[c].pose for c in range(len(spec.cameras))}
    return SelectivePipeline(intrinsics=intr, poses=poses, theta=theta, **kw)


class TestReconstructStep:
    def test_static_scene_full_reuse_after_first(self, static_seq):
        spec, frames, _ = static_seq
        pipe = _pipeline(spec, theta=0.0)
        grid = spec.grid()
        updates = [pipe.step(f, grid) for f in frames[0]]
        assert updates[0].r_reuse_frame == 0.0
        for u in updates[1:]:
            assert u.r_reuse_frame == 1.0

    def test_cumulative_reuse_static_eleven_frames(self):
        # 11 frames x 64 tiles: first frame regenerates, ten reuse
        from volstream.presets import static_scene
        from volstream.synthetic import render_sequence
        spec = static_scene(frames=11)
        frames, _ = render_sequence(spec)
        pipe = _pipeline(spec, theta=0.0)
        grid = spec.grid()
        for f in frames[0]:
            pipe.step(f, grid)
        assert cumulative_reuse(pipe.updates) == pytest.approx(640 / 704)
        assert mean_frame_reuse(pipe.updates) == pytest.approx(10 / 11)

    def test_every_tile_changed_means_zero_reuse(self, static_seq):
        spec, frames, _ = static_seq
        pipe = _pipeline(spec, theta=0.0)
        grid = spec.grid()
        for f in frames[0][:3]:
            pipe.step(f, grid, force_all=True)
        assert cumulative_reuse(pipe.updates) == 0.0

    def test_selective_equals_full_on_regen_and_prev_elsewhere(self, moving_box_seq):
        spec, frames, gt = moving_box_seq
        grid = spec.grid()
        sel = _pipeline(spec, theta=1e-9, stride=1)
        full = _pipeline(spec, theta=0.0, stride=1)
        prev_full_segments = {}
        for f_idx, frame in enumerate(frames[0][:6]):
            upd = sel.step(frame, grid)
            prev_state = dict(prev_full_segments)
            full.step(frame, grid, force_all=True)
            full_segments = {k: v for k, v in full.scene.segments.items()}
            if f_idx > 0:
                regen = set(upd.regenerated_tiles)
                assert regen == set(np.nonzero(gt.changed[0, f_idx])[0])
                for t in range(grid.num_tiles):
                    key = (0, t)
                    if t in regen:
                        assert sel.scene.segments[key] == full_segments[key]
                    else:
                        assert sel.scene.segments[key] == prev_state[key]
            prev_full_segments = full_segments

    def test_reuse_soundness_point_for_point(self, moving_box_seq):
        spec, frames, _ = moving_box_seq
        grid = spec.grid()
        sel = _pipeline(spec, theta=1e-9, stride=1)
        full = _pipeline(spec, theta=0.0, stride=1)
        for frame in frames[0]:
            sel.step(frame, grid)
            full.step(frame, grid, force_all=True)
        a, b = sel.scene.merged(), full.scene.merged()
        assert a == b

    def test_monotone_reuse_in_theta(self, moving_box_seq):
        spec, frames, _ = moving_box_seq
        grid = spec.grid()
        ratios = []
        for theta in (0.0, 5.0, 50.0, 1e9):
            pipe = _pipeline(spec, theta=theta)
            for frame in frames[0]:
                pipe.step(frame, grid)
            ratios.append(cumulative_reuse(pipe.updates))
        assert ratios == sorted(ratios)
        # 10-frame sequence: 9 reusing frames out of 10 at infinite theta
        assert ratios[-1] == pytest.approx(9 / 10, abs=1e-9)

    def test_idempotent_on_repeated_pair(self, moving_box_seq):
        spec, frames, _ = moving_box_seq
        grid = spec.grid()
        intr = spec.cameras[0].intrinsics
        pose = spec.cameras[0].pose
        scene = ScenePointCloud()
        mask0 = tile_change_mask(frames[0][0], frames[0][1], grid, 1e-9, stride=1)
        reconstruct_step(scene, frames[0][0], mask0, pose, intr)
        scene, _ = reconstruct_step(scene, frames[0][1], mask0, pose, intr)
        snap1 = {k: v for k, v in scene.segments.items()}
        scene, _ = reconstruct_step(scene, frames[0][1], mask0, pose, intr)
        for k in snap1:
            assert scene.segments[k] == snap1[k]

    def test_stale_camera_skipped_with_marker(self, static_seq):
        spec, frames, _ = static_seq
        grid = spec.grid()
        pipe = _pipeline(spec, theta=0.0)
        pipe.step(frames[0][0], grid)
        before = dict(pipe.scene.segments)
        upd = pipe.step(frames[0][1], grid, stale=True)
        assert upd.stale
        assert upd.regenerated == () and upd.reused == ()
        assert pipe.scene.segments == before  # old segments persist

    def test_stale_excluded_from_cumulative(self, static_seq):
        spec, frames, _ = static_seq
        grid = spec.grid()
        pipe = _pipeline(spec, theta=0.0)
        pipe.step(frames[0][0], grid)
        pipe.step(frames[0][1], grid, stale=True)
        pipe.step(frames[0][2], grid)
        n = grid.num_tiles
        assert cumulative_reuse(pipe.updates) == pytest.approx(n / (2 * n))

    def test_empty_update_list_rejected(self):
        with pytest.raises(StreamError):
            cumulative_reuse([])
