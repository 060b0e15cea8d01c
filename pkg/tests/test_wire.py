import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volstream.errors import DecodeError
from volstream.transport import wire


def test_header_layout_size():
    # magic(4) + version(1) + type(1) + frame u64(8) + timestamp u64(8)
    # + record count u32(4)
    assert wire.HEADER_SIZE == 26


def test_empty_update_is_header_only():
    msg = wire.SceneUpdate(frame_index=5, capture_timestamp_us=99, records=())
    data = wire.encode(msg)
    assert len(data) == wire.HEADER_SIZE
    assert data[:4] == b"TORS"
    assert wire.decode(data) == msg


def test_single_replace_two_points_layout():
    # byte-count arithmetic: header + 8-byte record header + 2*15 payload
    rec = wire.SegmentRecord(
        camera_id=2, tile_index=37, action=wire.ACTION_REPLACE,
        positions=np.array([[0.5, -1.0, 2.5], [0.0, 0.25, 1.0]], np.float32),
        colors=np.array([[255, 0, 0], [0, 255, 0]], np.uint8))
    msg = wire.SceneUpdate(frame_index=1, capture_timestamp_us=2, records=(rec,))
    data = wire.encode(msg)
    assert len(data) == wire.HEADER_SIZE + 8 + 30
    out = wire.decode(data)
    assert out == msg
    assert out.records[0].positions.dtype == np.float32


def test_reuse_record_carries_no_payload():
    rec = wire.SegmentRecord(camera_id=1, tile_index=4, action=wire.ACTION_REUSE)
    msg = wire.SceneUpdate(frame_index=0, capture_timestamp_us=0, records=(rec,))
    assert len(wire.encode(msg)) == wire.HEADER_SIZE + 8
    with pytest.raises(ValueError):
        wire.SegmentRecord(camera_id=1, tile_index=4, action=wire.ACTION_REUSE,
                           positions=np.zeros((1, 3), np.float32),
                           colors=np.zeros((1, 3), np.uint8))


def _random_update(rng) -> wire.SceneUpdate:
    records = []
    for _ in range(rng.integers(0, 6)):
        if rng.random() < 0.4:
            records.append(wire.SegmentRecord(
                camera_id=int(rng.integers(0, 255)),
                tile_index=int(rng.integers(0, 65535)),
                action=wire.ACTION_REUSE))
        else:
            n = int(rng.integers(0, 40))
            records.append(wire.SegmentRecord(
                camera_id=int(rng.integers(0, 255)),
                tile_index=int(rng.integers(0, 65535)),
                action=wire.ACTION_REPLACE,
                positions=rng.normal(size=(n, 3)).astype(np.float32),
                colors=rng.integers(0, 256, (n, 3)).astype(np.uint8)))
    return wire.SceneUpdate(frame_index=int(rng.integers(0, 2**63)),
                            capture_timestamp_us=int(rng.integers(0, 2**63)),
                            records=tuple(records))


def test_update_roundtrip_randomized(rng):
    for _ in range(200):
        msg = _random_update(rng)
        assert wire.decode(wire.encode(msg)) == msg


def test_control_messages_roundtrip():
    msgs = [
        wire.Hello(fov_h=np.float32(1.25), capabilities=3, send_timestamp_us=777),
        wire.ViewportFeedback(state_timestamp_us=10, position=(1.0, -2.0, 0.5),
                              yaw=np.float32(0.25), pitch=np.float32(-0.125),
                              fov_h=np.float32(1.5), clock_offset_us=-12345,
                              flags=1, send_timestamp_us=11),
        wire.Ack(frame_index=42, render_complete_timestamp_us=123456,
                 send_timestamp_us=123456),
        wire.Stats(send_timestamp_us=9, echo_timestamp_us=8,
                   server_recv_timestamp_us=7, fps=np.float32(29.5),
                   latency_ms=np.float32(42.25), theta=np.float32(3.5),
                   point_budget=9000, bytes_per_second=np.float32(1e6),
                   reuse_ratio=np.float32(0.75)),
    ]
    for m in msgs:
        out = wire.decode(wire.encode(m))
        assert type(out) is type(m)
        enc_a, enc_b = wire.encode(m), wire.encode(out)
        assert enc_a == enc_b  # field-exact after one trip


@settings(max_examples=200, deadline=None)
@given(st.binary(min_size=0, max_size=80))
def test_decode_never_crashes_unstructured(data):
    try:
        wire.decode(data)
    except DecodeError:
        pass  # expected for garbage


def test_decode_errors_carry_offsets():
    with pytest.raises(DecodeError) as err:
        wire.decode(b"WXYZ" + bytes(22))
    assert err.value.details["offset"] == 0

    good = wire.encode(wire.SceneUpdate(1, 2, (wire.SegmentRecord(
        camera_id=0, tile_index=0, action=wire.ACTION_REPLACE,
        positions=np.zeros((2, 3), np.float32),
        colors=np.zeros((2, 3), np.uint8)),)))
    with pytest.raises(DecodeError) as err:
        wire.decode(good[:-10])  # truncated payload
    assert "truncated" in str(err.value)
    assert err.value.details["offset"] == wire.HEADER_SIZE + 8

    bad_version = bytearray(good)
    bad_version[4] = 9
    with pytest.raises(DecodeError) as err:
        wire.decode(bytes(bad_version))
    assert err.value.details["offset"] == 4

    trailing = good + b"\x00"
    with pytest.raises(DecodeError):
        wire.decode(trailing)
