"""Per-session transmission metrics: bytes, rolling FPS, capture-to-render
latency, and the aggregates the experiment reports are built from."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

FPS_WINDOW_US = 1_000_000


@dataclass
class FrameLog:
    frame_index: int
    capture_timestamp_us: int
    send_start_us: int
    send_complete_us: int
    nbytes: int
    late: bool = False
    ack_timestamp_us: int | None = None        # server clock, offset-corrected
    latency_ms: float | None = None
    fps_at_ack: float | None = None


@dataclass
class SessionMetrics:
    frames: list[FrameLog] = field(default_factory=list)
    skipped_ticks: int = 0
    stale_feedback_ticks: int = 0
    bytes_sent: int = 0
    _by_index: dict[int, FrameLog] = field(default_factory=dict)
    _ack_times: list[int] = field(default_factory=list)

    def record_send(self, frame_index: int, capture_timestamp_us: int,
                    send_start_us: int, send_complete_us: int, nbytes: int,
                    late: bool = False) -> FrameLog:
        log = FrameLog(frame_index=frame_index,
                       capture_timestamp_us=capture_timestamp_us,
                       send_start_us=send_start_us,
                       send_complete_us=send_complete_us,
                       nbytes=nbytes, late=late)
        self.frames.append(log)
        self._by_index[frame_index] = log
        self.bytes_sent += nbytes
        return log

    def record_skip(self) -> None:
        self.skipped_ticks += 1

    def record_ack(self, frame_index: int, render_ts_us_corrected: int) -> None:
        log = self._by_index.get(frame_index)
        if log is None or log.ack_timestamp_us is not None:
            return
        log.ack_timestamp_us = render_ts_us_corrected
        log.latency_ms = (render_ts_us_corrected - log.capture_timestamp_us) / 1000.0
        self._ack_times.append(render_ts_us_corrected)
        lo = render_ts_us_corrected - FPS_WINDOW_US
        in_window = sum(1 for t in self._ack_times if t > lo)
        log.fps_at_ack = in_window * 1e6 / FPS_WINDOW_US

    def acked_frames(self) -> list[FrameLog]:
        return [f for f in self.frames if f.ack_timestamp_us is not None]

    def _agg(self, values: list[float]) -> dict:
        if not values:
            return {"min": 0.0, "avg": 0.0, "max": 0.0}
        return {"min": min(values), "avg": sum(values) / len(values),
                "max": max(values)}

    def summary(self) -> dict:
        acked = self.acked_frames()
        # the rolling-FPS series only becomes meaningful once the first
        # window has filled
        fps_series = [f.fps_at_ack for f in acked
                      if f.ack_timestamp_us is not None
                      and f.ack_timestamp_us >= FPS_WINDOW_US]
        lat_series = [f.latency_ms for f in acked]
        duration_us = (max((f.ack_timestamp_us for f in acked), default=0)
                       or 1)
        return {
            "frames_sent": len(self.frames),
            "frames_acked": len(acked),
            "skipped_ticks": self.skipped_ticks,
            "stale_feedback_ticks": self.stale_feedback_ticks,
            "bytes_sent": self.bytes_sent,
            "throughput_bps": self.bytes_sent * 8e6 / duration_us,
            "fps": self._agg(fps_series),
            "latency_ms": self._agg(lat_series),
        }

    def ndjson_lines(self) -> list[str]:
        lines = []
        for f in self.frames:
            lines.append(json.dumps({
                "frame": f.frame_index,
                "capture_us": f.capture_timestamp_us,
                "send_start_us": f.send_start_us,
                "send_complete_us": f.send_complete_us,
                "bytes": f.nbytes,
                "late": f.late,
                "ack_us": f.ack_timestamp_us,
                "latency_ms": f.latency_ms,
                "fps": f.fps_at_ack,
            }, sort_keys=True))
        return lines
