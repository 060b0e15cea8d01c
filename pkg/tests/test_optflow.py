import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volstream.errors import DimensionMismatchError, StreamError
from volstream.geometry import RgbdFrame, TileGrid
from volstream.optflow import (FlowVector, TileChangeMask, flow_margin,
                               lk_flow_at, lk_flow_points, structure_tensor_at,
                               tile_change_mask, to_gray)


def gaussian_blob(h, w, cx, cy, sigma=4.0, amp=0.8):
    ys, xs = np.mgrid[0:h, 0:w]
    return amp * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * sigma ** 2))


def block_match_oracle(prev, cur, x, y, patch=7, search=3):
    """Exhaustive integer-displacement block matching with parabolic sub-pixel
    refinement; the independent check for the LK solve."""
    half = patch // 2
    ref = prev[y - half:y + half + 1, x - half:x + half + 1]
    costs = np.zeros((2 * search + 1, 2 * search + 1))
    for dy in range(-search, search + 1):
        for dx in range(-search, search + 1):
            win = cur[y + dy - half:y + dy + half + 1,
                      x + dx - half:x + dx + half + 1]
            costs[dy + search, dx + search] = np.sum((win - ref) ** 2)
    iy, ix = np.unravel_index(np.argmin(costs), costs.shape)

    def refine(c_m, c_0, c_p):
        denom = c_m - 2 * c_0 + c_p
        return 0.0 if abs(denom) < 1e-12 else 0.5 * (c_m - c_p) / denom

    dx = ix - search
    dy = iy - search
    if 0 < ix < 2 * search:
        dx += refine(costs[iy, ix - 1], costs[iy, ix], costs[iy, ix + 1])
    if 0 < iy < 2 * search:
        dy += refine(costs[iy - 1, ix], costs[iy, ix], costs[iy + 1, ix])
    return dx, dy


class TestLkFlowAt:
    def test_identical_frames_zero_flow(self, rng):
        img = rng.random((32, 32))
        for p in [(10, 10), (16, 20), (25, 7)]:
            fv = lk_flow_at(img, img, p)
            if fv.valid:
                assert fv.u == 0.0 and fv.v == 0.0

    def test_translated_blob_matches_block_matching(self):
        h = w = 48
        prev = gaussian_blob(h, w, 24.0, 24.0)
        cur = gaussian_blob(h, w, 25.0, 24.0)  # exact (1, 0) motion
        flank_points = [(20, 24), (28, 24), (24, 20), (24, 28), (21, 21)]
        for (x, y) in flank_points:
            fv = lk_flow_at(prev, cur, (x, y), window=5)
            assert fv.valid
            ox, oy = block_match_oracle(prev, cur, x, y)
            assert abs(ox - 1.0) < 0.15 and abs(oy) < 0.15  # oracle sanity
            assert abs(fv.u - 1.0) < 0.25
            assert abs(fv.v - 0.0) < 0.25

    def test_aperture_problem_flagged_invalid(self):
        # purely horizontal gradient: e_y = e_xy = 0 analytically
        xs = np.tile(np.linspace(0, 1, 32), (32, 1))
        fv = lk_flow_at(xs, np.roll(xs, 1, axis=1), (16, 16))
        assert not fv.valid
        t = structure_tensor_at(xs, xs, 16, 16)
        assert t.e_y == 0.0 and t.e_xy == 0.0

    def test_border_rejected(self):
        img = np.zeros((16, 16))
        with pytest.raises(StreamError):
            lk_flow_at(img, img, (2, 8), window=5)
        with pytest.raises(StreamError):
            lk_flow_at(img, img, (8, 13), window=5)

    def test_even_window_rejected(self):
        img = np.zeros((16, 16))
        with pytest.raises(StreamError):
            lk_flow_at(img, img, (8, 8), window=4)

    def test_shift_equivariance(self, rng):
        img = rng.random((40, 40))
        moved = np.clip(img + rng.normal(0, 0.05, img.shape), 0, 1)
        a = lk_flow_at(img, moved, (20, 20))
        shifted_prev = np.roll(img, (3, 5), axis=(0, 1))
        shifted_cur = np.roll(moved, (3, 5), axis=(0, 1))
        b = lk_flow_at(shifted_prev, shifted_cur, (25, 23))
        assert a.valid == b.valid
        assert abs(a.u - b.u) < 1e-9 and abs(a.v - b.v) < 1e-9

    def test_structure_tensor_invariants(self, rng):
        prev = rng.random((24, 24))
        cur = rng.random((24, 24))
        for _ in range(20):
            x, y = rng.integers(4, 20, 2)
            t = structure_tensor_at(prev, cur, int(x), int(y))
            assert t.e_x >= 0 and t.e_y >= 0
            assert t.e_xy ** 2 <= t.e_x * t.e_y + 1e-12


def _as_frame(gray01, depth=None, cam=0, idx=0):
    color = np.repeat((gray01 * 255).astype(np.uint8)[..., None], 3, axis=2)
    if depth is None:
        depth = np.full(gray01.shape, 1500, np.uint16)
    return RgbdFrame(camera_id=cam, frame_index=idx, timestamp_us=idx * 33_333,
                     color=color, depth=depth)


class TestTileChangeMask:
    def test_identical_frames_score_zero(self, rng):
        img = rng.random((32, 32))
        f0, f1 = _as_frame(img), _as_frame(img, idx=1)
        grid = TileGrid.for_image(32, 32, 4)
        m = tile_change_mask(f0, f1, grid, theta=0.0, stride=1)
        assert np.all(m.d_c == 0.0)
        assert not m.changed.any()  # theta 0: changed requires d_c > 0
        m2 = tile_change_mask(f0, f1, grid, theta=0.5, stride=1)
        assert not m2.changed.any()

    def test_moving_box_matches_ground_truth(self, moving_box_seq):
        spec, frames, gt = moving_box_seq
        grid = spec.grid()
        for f in range(1, 6):
            m = tile_change_mask(frames[0][f - 1], frames[0][f], grid,
                                 theta=1e-9, stride=1)
            assert np.array_equal(m.changed, gt.changed[0, f]), f"frame {f}"

    def test_stride4_tracks_stride1(self, moving_box_seq):
        spec, frames, gt = moving_box_seq
        grid = spec.grid()
        m1 = tile_change_mask(frames[0][0], frames[0][1], grid, 0.0, stride=1)
        m4 = tile_change_mask(frames[0][0], frames[0][1], grid, 0.0, stride=4)
        strong = m1.d_c > np.percentile(m1.d_c[m1.d_c > 0], 50)
        rel = np.abs(m4.d_c[strong] - m1.d_c[strong]) / m1.d_c[strong]
        assert rel.max() < 0.3

    def test_theta_monotonicity(self, moving_box_seq):
        spec, frames, _ = moving_box_seq
        grid = spec.grid()
        masks = [tile_change_mask(frames[0][1], frames[0][2], grid, th, stride=2)
                 for th in (0.0, 1.0, 10.0, 100.0)]
        for lo, hi in zip(masks, masks[1:]):
            assert set(np.nonzero(hi.changed)[0]) <= set(np.nonzero(lo.changed)[0])

    def test_dc_additivity_over_lattice_partition(self, moving_box_seq):
        # with the validity pattern fixed, the tile score is a plain sum over
        # its lattice points: any partition of the summands reproduces it
        spec, frames, _ = moving_box_seq
        grid = spec.grid()
        prev, cur = frames[0][1], frames[0][2]
        full = tile_change_mask(prev, cur, grid, 0.0, stride=1)
        from volstream.optflow import flow_margin, lk_flow_points
        m = flow_margin(5)
        x0, y0, x1, y1 = grid.tile_bounds(int(np.argmax(full.d_c)))
        xs, ys = np.meshgrid(np.arange(x0 + m, x1 - m), np.arange(y0 + m, y1 - m))
        xs, ys = xs.ravel(), ys.ravel()
        u, v, valid = lk_flow_points(to_gray(prev.color), to_gray(cur.color),
                                     xs, ys, window=5)
        mags = np.where(valid, np.hypot(u, v), 0.0)
        # depth term is dense over the whole tile
        bx, by = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
        border = (bx.ravel(), by.ravel())
        dpb = prev.depth[border[1], border[0]].astype(float)
        dcb = cur.depth[border[1], border[0]].astype(float)
        depth_all = np.where((dpb > 0) & (dcb > 0), np.abs(dcb - dpb), 0.0) * 1e-3
        total = mags.sum() + depth_all.sum() * 10.0
        # partition the flow summands arbitrarily; the depth part is one group
        split = len(mags) // 3
        parts = (mags[:split].sum() + mags[split:].sum()
                 + depth_all.sum() * 10.0)
        assert np.isclose(parts, total, rtol=1e-12)
        assert np.isclose(full.d_c[np.argmax(full.d_c)], total, rtol=1e-9)

    def test_depth_term_catches_axial_motion(self):
        gray = np.full((32, 32), 0.5)
        near = np.full((32, 32), 1000, np.uint16)
        far = near.copy()
        far[8:16, 8:16] = 1300  # object moved 0.3 m along the axis
        grid = TileGrid.for_image(32, 32, 4)
        m = tile_change_mask(_as_frame(gray, near), _as_frame(gray, far, idx=1),
                             grid, theta=0.0, stride=1)
        assert m.changed[5]
        m0 = tile_change_mask(_as_frame(gray, near), _as_frame(gray, far, idx=1),
                              grid, theta=0.0, stride=1, lambda_depth=0.0)
        assert not m0.changed.any()  # literal intensity-only formulation

    def test_dimension_mismatch(self, rng):
        img = rng.random((32, 32))
        grid = TileGrid.for_image(16, 16, 4)
        with pytest.raises(DimensionMismatchError):
            tile_change_mask(_as_frame(img), _as_frame(img, idx=1), grid, 0.0)

    def test_mask_invariant_enforced(self):
        grid = TileGrid.for_image(16, 16, 2)
        with pytest.raises(StreamError):
            TileChangeMask(grid=grid, d_c=np.zeros(4),
                           changed=np.ones(4, dtype=bool), theta=0.0)

    @settings(max_examples=30, deadline=None)
    @given(theta=st.floats(0, 50), seed=st.integers(0, 2**16))
    def test_changed_equals_threshold_comparison(self, theta, seed):
        r = np.random.default_rng(seed)
        img0 = r.random((16, 16))
        img1 = np.clip(img0 + r.normal(0, 0.1, img0.shape), 0, 1)
        grid = TileGrid.for_image(16, 16, 2)
        m = tile_change_mask(_as_frame(img0), _as_frame(img1, idx=1), grid,
                             theta, stride=1)
        assert np.array_equal(m.changed, m.d_c > theta)
        assert (m.d_c >= 0).all()
