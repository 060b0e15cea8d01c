import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volstream.errors import StreamError
from volstream.transport.adapt import (BandwidthController, ThetaCurve,
                                       calibrate_theta_anchors)
from volstream.transport.throttle import TokenBucket

MBPS = 1e6


class TestTokenBucket:
    def test_serialization_delay(self):
        b = TokenBucket(capacity_bps=20 * MBPS, burst_bytes=1 << 20)
        r = b.send(25_000, now_us=0)
        assert r.completion_us == pytest.approx(25_000 * 8 / 20, abs=1)

    def test_offered_equals_capacity_delivers_in_one_second(self):
        # 20 Mbps, 2.5 MB offered: last byte leaves at ~1.0 s
        b = TokenBucket(capacity_bps=20 * MBPS, burst_bytes=100_000)
        completion = 0
        for k in range(25):
            r = b.send(100_000, now_us=k * 40_000)
            completion = r.completion_us
        assert completion == pytest.approx(1_000_000, rel=0.01)

    def test_oversubscribed_queues_the_remainder(self):
        # 5 MB offered within 1 s on a 20 Mbps link: ~2.5 MB fits the second,
        # the rest drains afterwards
        b = TokenBucket(capacity_bps=20 * MBPS, burst_bytes=100_000)
        done_in_second = 0
        for k in range(50):
            r = b.send(100_000, now_us=k * 20_000)
            if r.completion_us <= 1_000_000:
                done_in_second += r.nbytes
        assert done_in_second == pytest.approx(2_500_000, rel=0.05)
        assert r.completion_us == pytest.approx(2_000_000, rel=0.01)

    def test_infinite_capacity_instant(self):
        b = TokenBucket(capacity_bps=math.inf, burst_bytes=10)
        r = b.send(10**9, now_us=123)
        assert r.completion_us == 123

    def test_fifo_queueing(self):
        b = TokenBucket(capacity_bps=8 * MBPS, burst_bytes=10**6)  # 1 B/us
        r1 = b.send(1000, now_us=0)
        r2 = b.send(1000, now_us=100)  # arrives while busy
        assert r1.completion_us == 1000
        assert r2.start_us == 1000
        assert r2.completion_us == 2000

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 50_000), st.integers(0, 5_000)),
                    min_size=1, max_size=60))
    def test_throughput_window_bound(self, sends):
        # token-bucket soundness: bytes released over any window never beat
        # capacity * window + burst
        cap = 10 * MBPS
        burst = 20_000
        b = TokenBucket(capacity_bps=cap, burst_bytes=burst)
        now = 0
        events = []
        for nbytes, gap in sends:
            now += gap
            r = b.send(nbytes, now)
            events.append((r.completion_us, nbytes))
        for i in range(len(events)):
            for j in range(i, len(events)):
                t0, t1 = events[i][0], events[j][0]
                released = sum(n for t, n in events if t0 <= t <= t1)
                window_s = (t1 - t0) / 1e6
                # the message completing exactly at t0 serialized mostly
                # before the window opened; it is the only allowed slack
                # beyond capacity * window + burst
                assert released <= cap / 8 * window_s + burst + events[i][1]

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            TokenBucket(capacity_bps=0, burst_bytes=10)
        with pytest.raises(ValueError):
            TokenBucket(capacity_bps=10, burst_bytes=-1)


class TestAdapt:
    def _controller(self):
        curve = ThetaCurve(bandwidth_anchors_bps=(20e6, 50e6, 100e6),
                           theta_anchors=(9.0, 5.0, 2.0))
        return BandwidthController.create(100e6, curve,
                                          budget_anchors=(200_000, 500_000,
                                                          1_000_000))

    def test_anchor_exact(self):
        theta, budget = self._controller().adapt(100e6)
        assert theta == 2.0 and budget == 1_000_000

    def test_midpoint_interpolation(self):
        theta, budget = self._controller().adapt(35e6)
        assert theta == pytest.approx((9.0 + 5.0) / 2)
        assert budget == 350_000

    def test_clamped_outside(self):
        theta_lo, budget_lo = self._controller().adapt(10e6)
        assert theta_lo == 9.0 and budget_lo == 200_000
        theta_hi, budget_hi = self._controller().adapt(500e6)
        assert theta_hi == 2.0 and budget_hi == 1_000_000

    def test_monotonicity_property(self):
        c = self._controller()
        bws = np.linspace(5e6, 150e6, 60)
        thetas, budgets = zip(*(c.adapt(bw) for bw in bws))
        assert all(a >= b - 1e-12 for a, b in zip(thetas, thetas[1:]))
        assert all(a <= b for a, b in zip(budgets, budgets[1:]))

    def test_invalid_bandwidth(self):
        with pytest.raises(StreamError):
            self._controller().adapt(0.0)

    def test_curve_validation(self):
        with pytest.raises(StreamError):
            ThetaCurve(bandwidth_anchors_bps=(20e6, 50e6),
                       theta_anchors=(1.0, 2.0))  # theta increasing
        with pytest.raises(StreamError):
            ThetaCurve(bandwidth_anchors_bps=(50e6, 20e6),
                       theta_anchors=(1.0, 2.0))

    def test_measurement_converges_to_capacity(self):
        c = self._controller()
        c.measured_bps = 1e6  # start badly wrong
        b = c.bucket
        for k in range(50):
            r = b.send(400_000, now_us=k * 33_333)
            c.observe(r)
        assert c.measured_bps == pytest.approx(100e6, rel=0.02)


class TestThetaCalibration:
    def test_quantile_inversion(self):
        # frozen oracle: 900 scores 1..900 plus 100 first-frame tiles.
        # target 0.85 -> want 850 of 1000 reusing -> theta = 850th score
        scores = np.arange(1.0, 901.0)
        thetas, achieved = calibrate_theta_anchors(scores, first_frame_tiles=100,
                                                   targets=(0.85, 0.5, 0.25))
        assert thetas[0] == 850.0
        assert achieved[0] == pytest.approx(0.85)
        assert thetas[1] == 500.0 and achieved[1] == pytest.approx(0.5)
        assert thetas[2] == 250.0 and achieved[2] == pytest.approx(0.25)

    def test_unreachable_low_target_clamps_to_zero(self):
        scores = np.concatenate([np.zeros(800), np.arange(1, 201)])
        thetas, achieved = calibrate_theta_anchors(scores, first_frame_tiles=0,
                                                   targets=(0.5,))
        assert thetas[0] == 0.0
        assert achieved[0] == pytest.approx(0.8)  # the static floor

    def test_thetas_non_increasing_for_decreasing_targets(self, rng):
        scores = rng.exponential(5.0, size=5000)
        thetas, achieved = calibrate_theta_anchors(scores, 100,
                                                   targets=(0.9, 0.6, 0.3))
        assert thetas[0] >= thetas[1] >= thetas[2]
        assert achieved[0] >= achieved[1] >= achieved[2]
        ThetaCurve(bandwidth_anchors_bps=(20e6, 50e6, 100e6),
                   theta_anchors=thetas)  # valid as curve anchors

    def test_empty_rejected(self):
        with pytest.raises(StreamError):
            calibrate_theta_anchors(np.array([]), 0)
