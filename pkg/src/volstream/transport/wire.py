"""Binary wire protocol.

Every message is little-endian and starts with a 26-byte header:

    magic "TORS" | version u8 | msg_type u8 | frame_index u64 |
    timestamp_us u64 | record_count u32

timestamp_us semantics per type: HELLO/VIEWPORT_FEEDBACK/ACK carry the
client's send time, SCENE_UPDATE carries the source capture time, STATS the
server's send time. record_count is the segment-record count for
SCENE_UPDATE and 0 otherwise.

A segment record is an 8-byte header (camera u8, tile u16, action u8,
point_count u32) followed, for REPLACE, by point_count * 15 payload bytes
(3 x f32 position + 3 x u8 RGB per point). REUSE records carry no payload
and a zero count.

Stream framing (length prefixes, WebSocket frames) is the channel's concern;
these bytes are identical on every channel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import DecodeError

MAGIC = b"TORS"
VERSION = 1
HEADER = struct.Struct("<4sBBQQI")
HEADER_SIZE = HEADER.size  # 26

MSG_HELLO = 1
MSG_VIEWPORT_FEEDBACK = 2
MSG_SCENE_UPDATE = 3
MSG_ACK = 4
MSG_STATS = 5

ACTION_REPLACE = 1
ACTION_REUSE = 2

RECORD_HEADER = struct.Struct("<BHBI")  # 8 bytes
POINT_BYTES = 15

_HELLO_BODY = struct.Struct("<fI")
_FEEDBACK_BODY = struct.Struct("<QffffffqB")
_ACK_BODY = struct.Struct("<Q")
_STATS_BODY = struct.Struct("<QQfffIfff")


@dataclass(frozen=True)
class Hello:
    fov_h: float
    capabilities: int = 0
    send_timestamp_us: int = 0


@dataclass(frozen=True)
class ViewportFeedback:
    state_timestamp_us: int
    position: tuple[float, float, float]
    yaw: float
    pitch: float
    fov_h: float
    clock_offset_us: int = 0
    flags: int = 0
    send_timestamp_us: int = 0


@dataclass(frozen=True)
class SegmentRecord:
    camera_id: int
    tile_index: int
    action: int
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), np.float32))
    colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), np.uint8))

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float32).reshape(-1, 3)
        col = np.ascontiguousarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if self.action == ACTION_REUSE and len(pos):
            raise ValueError("REUSE records carry no payload")
        if len(pos) != len(col):
            raise ValueError(f"{len(pos)} positions vs {len(col)} colors")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "colors", col)

    @property
    def point_count(self) -> int:
        return len(self.positions)

    def __eq__(self, other) -> bool:
        return (isinstance(other, SegmentRecord)
                and self.camera_id == other.camera_id
                and self.tile_index == other.tile_index
                and self.action == other.action
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.colors, other.colors))


@dataclass(frozen=True)
class SceneUpdate:
    frame_index: int
    capture_timestamp_us: int
    records: tuple[SegmentRecord, ...]

    def payload_points(self) -> int:
        return sum(r.point_count for r in self.records)


@dataclass(frozen=True)
class Ack:
    frame_index: int
    render_complete_timestamp_us: int
    send_timestamp_us: int = 0


@dataclass(frozen=True)
class Stats:
    send_timestamp_us: int
    echo_timestamp_us: int    # client HELLO send time, for the clock exchange
    server_recv_timestamp_us: int
    fps: float
    latency_ms: float
    theta: float
    point_budget: int
    bytes_per_second: float
    reuse_ratio: float
    predicted_yaw: float = 0.0


WireMessage = Hello | ViewportFeedback | SceneUpdate | Ack | Stats


def _header(msg_type: int, frame_index: int, timestamp_us: int,
            record_count: int) -> bytes:
    return HEADER.pack(MAGIC, VERSION, msg_type, frame_index, timestamp_us,
                       record_count)


def encode(msg: WireMessage) -> bytes:
    if isinstance(msg, Hello):
        return (_header(MSG_HELLO, 0, msg.send_timestamp_us, 0)
                + _HELLO_BODY.pack(msg.fov_h, msg.capabilities))
    if isinstance(msg, ViewportFeedback):
        return (_header(MSG_VIEWPORT_FEEDBACK, 0, msg.send_timestamp_us, 0)
                + _FEEDBACK_BODY.pack(msg.state_timestamp_us,
                                      msg.position[0], msg.position[1],
                                      msg.position[2], msg.yaw, msg.pitch,
                                      msg.fov_h, msg.clock_offset_us, msg.flags))
    if isinstance(msg, SceneUpdate):
        parts = [_header(MSG_SCENE_UPDATE, msg.frame_index,
                         msg.capture_timestamp_us, len(msg.records))]
        for rec in msg.records:
            parts.append(RECORD_HEADER.pack(rec.camera_id, rec.tile_index,
                                            rec.action, rec.point_count))
            if rec.action == ACTION_REPLACE and rec.point_count:
                payload = np.empty((rec.point_count, POINT_BYTES), dtype=np.uint8)
                payload[:, :12] = rec.positions.astype("<f4").view(np.uint8).reshape(-1, 12)
                payload[:, 12:] = rec.colors
                parts.append(payload.tobytes())
        return b"".join(parts)
    if isinstance(msg, Ack):
        return (_header(MSG_ACK, msg.frame_index, msg.send_timestamp_us, 0)
                + _ACK_BODY.pack(msg.render_complete_timestamp_us))
    if isinstance(msg, Stats):
        return (_header(MSG_STATS, 0, msg.send_timestamp_us, 0)
                + _STATS_BODY.pack(msg.echo_timestamp_us,
                                   msg.server_recv_timestamp_us, msg.fps,
                                   msg.latency_ms, msg.theta, msg.point_budget,
                                   msg.bytes_per_second, msg.reuse_ratio,
                                   msg.predicted_yaw))
    raise TypeError(f"not a wire message: {type(msg)!r}")


def _need(buf: bytes, offset: int, count: int, what: str) -> None:
    if offset + count > len(buf):
        raise DecodeError(f"truncated while reading {what}", offset=offset,
                          needed=count, available=len(buf) - offset)


def decode(buf: bytes) -> WireMessage:
    _need(buf, 0, HEADER_SIZE, "header")
    magic, version, msg_type, frame_index, timestamp_us, record_count = \
        HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise DecodeError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise DecodeError(f"unsupported version {version}", offset=4)
    off = HEADER_SIZE

    if msg_type == MSG_HELLO:
        _need(buf, off, _HELLO_BODY.size, "hello body")
        fov_h, caps = _HELLO_BODY.unpack_from(buf, off)
        return Hello(fov_h=fov_h, capabilities=caps, send_timestamp_us=timestamp_us)

    if msg_type == MSG_VIEWPORT_FEEDBACK:
        _need(buf, off, _FEEDBACK_BODY.size, "feedback body")
        (ts, x, y, z, yaw, pitch, fov_h, offset_us, flags) = \
            _FEEDBACK_BODY.unpack_from(buf, off)
        return ViewportFeedback(state_timestamp_us=ts, position=(x, y, z),
                                yaw=yaw, pitch=pitch, fov_h=fov_h,
                                clock_offset_us=offset_us, flags=flags,
                                send_timestamp_us=timestamp_us)

    if msg_type == MSG_SCENE_UPDATE:
        records = []
        for _ in range(record_count):
            _need(buf, off, RECORD_HEADER.size, "record header")
            cam, tile, action, count = RECORD_HEADER.unpack_from(buf, off)
            off += RECORD_HEADER.size
            if action not in (ACTION_REPLACE, ACTION_REUSE):
                raise DecodeError(f"unknown record action {action}", offset=off - 5)
            if action == ACTION_REUSE and count:
                raise DecodeError("REUSE record with nonzero count", offset=off - 4)
            if action == ACTION_REPLACE and count:
                nbytes = count * POINT_BYTES
                _need(buf, off, nbytes, "record payload")
                raw = np.frombuffer(buf, dtype=np.uint8, count=nbytes,
                                    offset=off).reshape(count, POINT_BYTES)
                positions = raw[:, :12].copy().view("<f4").reshape(count, 3)
                colors = raw[:, 12:].copy()
                off += nbytes
            else:
                positions = np.zeros((0, 3), np.float32)
                colors = np.zeros((0, 3), np.uint8)
            records.append(SegmentRecord(camera_id=cam, tile_index=tile,
                                         action=action, positions=positions,
                                         colors=colors))
        if off != len(buf):
            raise DecodeError("trailing bytes after last record", offset=off)
        return SceneUpdate(frame_index=frame_index,
                           capture_timestamp_us=timestamp_us,
                           records=tuple(records))

    if msg_type == MSG_ACK:
        _need(buf, off, _ACK_BODY.size, "ack body")
        (render_ts,) = _ACK_BODY.unpack_from(buf, off)
        return Ack(frame_index=frame_index, render_complete_timestamp_us=render_ts,
                   send_timestamp_us=timestamp_us)

    if msg_type == MSG_STATS:
        _need(buf, off, _STATS_BODY.size, "stats body")
        (echo, recv, fps, lat, theta, budget, bps, reuse, pyaw) = \
            _STATS_BODY.unpack_from(buf, off)
        return Stats(send_timestamp_us=timestamp_us, echo_timestamp_us=echo,
                     server_recv_timestamp_us=recv, fps=fps, latency_ms=lat,
                     theta=theta, point_budget=budget, bytes_per_second=bps,
                     reuse_ratio=reuse, predicted_yaw=pyaw)

    raise DecodeError(f"unknown message type {msg_type}", offset=5)
