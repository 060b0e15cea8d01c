"""Bandwidth-driven adaptation: the dynamic change threshold and the
per-transmission point budget, both piecewise-linear in measured bandwidth,
plus the calibration routine that derives threshold anchors from a reference
sequence's change-score distribution."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import StreamError
from .throttle import SendReceipt, TokenBucket

DEFAULT_BANDWIDTH_ANCHORS_BPS = (20e6, 50e6, 100e6)
DEFAULT_BUDGET_ANCHORS = (200_000, 500_000, 1_000_000)
DEFAULT_REUSE_TARGETS = (0.85, 0.65, 0.25)  # at the anchors, low to high bw


@dataclass
class ThetaCurve:
    """theta(bandwidth): non-increasing piecewise-linear map."""

    bandwidth_anchors_bps: tuple[float, ...] = DEFAULT_BANDWIDTH_ANCHORS_BPS
    theta_anchors: tuple[float, ...] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        b = self.bandwidth_anchors_bps
        t = self.theta_anchors
        if len(b) != len(t) or len(b) < 2:
            raise StreamError("curve needs matching anchor lists (>= 2 points)")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise StreamError("bandwidth anchors must increase")
        if any(t[i] < t[i + 1] for i in range(len(t) - 1)):
            raise StreamError("theta anchors must be non-increasing in bandwidth")

    def theta(self, bandwidth_bps: float) -> float:
        return float(np.interp(bandwidth_bps, self.bandwidth_anchors_bps,
                               self.theta_anchors))


@dataclass
class BandwidthController:
    """Owns the token bucket, the bandwidth estimate, and both curves."""

    capacity_bps: float
    bucket: TokenBucket
    theta_curve: ThetaCurve
    budget_anchors: tuple[int, ...] = DEFAULT_BUDGET_ANCHORS
    ewma_alpha: float = 0.3
    measured_bps: float = field(default=0.0)

    def __post_init__(self):
        if len(self.budget_anchors) != len(self.theta_curve.bandwidth_anchors_bps):
            raise StreamError("budget anchors must match bandwidth anchors")
        if any(self.budget_anchors[i] > self.budget_anchors[i + 1]
               for i in range(len(self.budget_anchors) - 1)):
            raise StreamError("point budget must be non-decreasing in bandwidth")
        if self.measured_bps <= 0:
            # until the link has actually been saturated once, trust the
            # configured capacity
            self.measured_bps = self.capacity_bps

    @classmethod
    def create(cls, capacity_bps: float, theta_curve: ThetaCurve,
               burst_bytes: float | None = None, start_us: int = 0,
               budget_anchors: tuple[int, ...] = DEFAULT_BUDGET_ANCHORS,
               ) -> "BandwidthController":
        if burst_bytes is None:
            # default burst: one 33 ms tick's worth of line rate
            burst_bytes = (capacity_bps / 8) * 0.033 if np.isfinite(capacity_bps) \
                else 1 << 20
        bucket = TokenBucket(capacity_bps, burst_bytes, start_us=start_us)
        return cls(capacity_bps=capacity_bps, bucket=bucket,
                   theta_curve=theta_curve, budget_anchors=budget_anchors)

    def observe(self, receipt: SendReceipt) -> None:
        """Update the bandwidth estimate from a completed send: the time the
        message occupied the wire measures the link's serialization rate.
        Instantaneous completions (infinite capacity) carry no information."""
        if receipt.serialization_us > 0:
            sample = receipt.nbytes * 8e6 / receipt.serialization_us
            self.measured_bps = (self.ewma_alpha * sample
                                 + (1 - self.ewma_alpha) * self.measured_bps)

    def adapt(self, measured_bandwidth_bps: float | None = None) -> tuple[float, int]:
        """(theta, point_budget) for the given (or current) bandwidth."""
        bw = self.measured_bps if measured_bandwidth_bps is None \
            else measured_bandwidth_bps
        if bw <= 0:
            raise StreamError(f"measured bandwidth must be positive, got {bw}")
        theta = self.theta_curve.theta(bw)
        budget = int(round(np.interp(bw, self.theta_curve.bandwidth_anchors_bps,
                                     self.budget_anchors)))
        return theta, budget


def calibrate_theta_anchors(d_c_samples: np.ndarray,
                            first_frame_tiles: int,
                            targets: tuple[float, ...] = DEFAULT_REUSE_TARGETS,
                            ) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Pick theta anchors hitting the target cumulative reuse ratios.

    d_c_samples holds every per-tile change score of a reference sequence's
    frames after each camera's first (those first_frame_tiles tiles always
    regenerate and dilute the achievable ratio). Reuse at threshold t is
    #{d_c <= t} / (len(samples) + first_frame_tiles), so the threshold for a
    target ratio is a quantile; unreachable targets clamp to the nearest
    achievable end. Returns (thetas, achieved_ratios), ordered like targets
    (low-bandwidth/high-reuse first).
    """
    samples = np.sort(np.asarray(d_c_samples, dtype=np.float64))
    if len(samples) == 0:
        raise StreamError("no change-score samples to calibrate on")
    total = len(samples) + first_frame_tiles
    thetas = []
    achieved = []
    for target in targets:
        want = int(round(target * total))  # how many sampled tiles must reuse
        want = min(want, len(samples))
        if want <= 0:
            theta = 0.0
        else:
            theta = float(samples[want - 1])
        count = int(np.searchsorted(samples, theta, side="right"))
        thetas.append(theta)
        achieved.append(count / total)
    return tuple(thetas), tuple(achieved)
