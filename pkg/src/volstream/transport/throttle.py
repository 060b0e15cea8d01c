"""Token-bucket link model: burst up to the bucket size, long-run throughput
capped at the configured capacity. Works in virtual or wall time."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass
class SendReceipt:
    start_us: int
    completion_us: int
    nbytes: int
    deficit_bytes: float  # bytes that had to wait for refill

    @property
    def serialization_us(self) -> int:
        return self.completion_us - self.start_us


class TokenBucket:
    """Tokens are bytes; refill rate is capacity_bps / 8 per second."""

    def __init__(self, capacity_bps: float, burst_bytes: float,
                 start_us: int = 0, start_full: bool = True):
        if capacity_bps <= 0:
            raise ValueError("capacity_bps must be positive")
        if burst_bytes < 0:
            raise ValueError("burst_bytes must be >= 0")
        self.capacity_bps = float(capacity_bps)
        self.burst_bytes = float(burst_bytes)
        self._tokens = float(burst_bytes) if start_full else 0.0
        self._stamp_us = start_us
        self.busy_until_us = start_us
        self.released_bytes = 0

    @property
    def rate_bytes_per_us(self) -> float:
        if math.isinf(self.capacity_bps):
            return math.inf
        return self.capacity_bps / 8e6

    def tokens_at(self, now_us: int) -> float:
        if math.isinf(self.capacity_bps):
            return self.burst_bytes
        dt = max(0, now_us - self._stamp_us)
        return min(self.burst_bytes, self._tokens + dt * self.rate_bytes_per_us)

    def send(self, nbytes: int, now_us: int) -> SendReceipt:
        """Consume tokens for nbytes; returns when the last byte leaves the
        link. The link is a FIFO serializer at the configured rate (every
        byte takes 8/capacity seconds on the wire), so a send queues behind
        an unfinished one; the bucket caps how much may ever be admitted
        ahead of the refill rate.
        """
        start = max(now_us, self.busy_until_us)
        if math.isinf(self.capacity_bps):
            self.busy_until_us = start
            self.released_bytes += nbytes
            return SendReceipt(start_us=start, completion_us=start,
                               nbytes=nbytes, deficit_bytes=0.0)
        tokens = self.tokens_at(start)
        consumed = min(float(nbytes), tokens)
        deficit = nbytes - consumed
        serialization_us = nbytes / self.rate_bytes_per_us
        token_wait_us = deficit / self.rate_bytes_per_us
        completion = start + int(math.ceil(max(serialization_us, token_wait_us)))
        self._tokens = tokens - consumed
        self._stamp_us = start
        self.busy_until_us = completion
        self.released_bytes += nbytes
        return SendReceipt(start_us=start, completion_us=completion,
                           nbytes=nbytes, deficit_bytes=deficit)
