"""Clock abstraction: wall clock for live sessions, virtual clock for
deterministic simulation."""

from __future__ import annotations

import time


class Clock:
    def now_us(self) -> int:
        raise NotImplementedError


class WallClock(Clock):
    def __init__(self):
        self._t0 = time.monotonic_ns()

    def now_us(self) -> int:
        return (time.monotonic_ns() - self._t0) // 1000


class VirtualClock(Clock):
    """Advances only when told to; the backbone of reproducible runs."""

    def __init__(self, start_us: int = 0):
        self._now = start_us

    def now_us(self) -> int:
        return self._now

    def advance_to(self, t_us: int) -> None:
        if t_us < self._now:
            raise ValueError(f"clock cannot move backwards: {self._now} -> {t_us}")
        self._now = t_us

    def advance_by(self, dt_us: int) -> None:
        self.advance_to(self._now + dt_us)
