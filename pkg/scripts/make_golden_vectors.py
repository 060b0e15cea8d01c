#!/usr/bin/env python3
"""Regenerate the shared wire-protocol fixtures under fixtures/golden/.

Both test suites consume these: the Python side asserts the encoder still
produces these exact bytes, the viewer side asserts its decoder recovers the
documented fields. Values are hand-picked, not random, so failures point at
the drifted field directly.
"""

import json
from pathlib import Path

import numpy as np

from volstream.transport import wire

OUT = Path(__file__).resolve().parents[1] / "fixtures" / "golden"


def messages():
    yield "hello", wire.Hello(fov_h=1.5, capabilities=3,
                              send_timestamp_us=1_111_222), {
        "type": "hello", "fov_h": 1.5, "capabilities": 3,
        "send_timestamp_us": 1_111_222}

    yield "feedback", wire.ViewportFeedback(
        state_timestamp_us=42_000_000, position=(0.25, -0.5, 1.75),
        yaw=0.78125, pitch=-0.25, fov_h=1.5707963705062866,
        clock_offset_us=-12_345, flags=1, send_timestamp_us=42_000_100), {
        "type": "viewport_feedback", "state_timestamp_us": 42_000_000,
        "position": [0.25, -0.5, 1.75], "yaw": 0.78125, "pitch": -0.25,
        "fov_h": 1.5707963705062866, "clock_offset_us": -12_345, "flags": 1,
        "send_timestamp_us": 42_000_100}

    yield "ack", wire.Ack(frame_index=77, render_complete_timestamp_us=43_000_500,
                          send_timestamp_us=43_000_500), {
        "type": "ack", "frame_index": 77,
        "render_complete_timestamp_us": 43_000_500,
        "send_timestamp_us": 43_000_500}

    yield "stats", wire.Stats(
        send_timestamp_us=50_000_000, echo_timestamp_us=1_111_222,
        server_recv_timestamp_us=1_111_900, fps=29.5, latency_ms=42.25,
        theta=8.125, point_budget=9_000, bytes_per_second=262_144.0,
        reuse_ratio=0.75, predicted_yaw=-0.5), {
        "type": "stats", "send_timestamp_us": 50_000_000,
        "echo_timestamp_us": 1_111_222,
        "server_recv_timestamp_us": 1_111_900, "fps": 29.5,
        "latency_ms": 42.25, "theta": 8.125, "point_budget": 9_000,
        "bytes_per_second": 262_144.0, "reuse_ratio": 0.75,
        "predicted_yaw": -0.5}

    yield "update_empty", wire.SceneUpdate(
        frame_index=9, capture_timestamp_us=33_333, records=()), {
        "type": "scene_update", "frame_index": 9,
        "capture_timestamp_us": 33_333, "records": []}

    two = wire.SegmentRecord(
        camera_id=2, tile_index=37, action=wire.ACTION_REPLACE,
        positions=np.array([[0.5, -1.0, 2.5], [0.0, 0.25, 1.0]], np.float32),
        colors=np.array([[255, 0, 0], [0, 255, 64]], np.uint8))
    yield "update_two_points", wire.SceneUpdate(
        frame_index=12, capture_timestamp_us=400_000, records=(two,)), {
        "type": "scene_update", "frame_index": 12,
        "capture_timestamp_us": 400_000,
        "records": [{"camera_id": 2, "tile_index": 37, "action": "replace",
                     "positions": [[0.5, -1.0, 2.5], [0.0, 0.25, 1.0]],
                     "colors": [[255, 0, 0], [0, 255, 64]]}]}

    mixed = (
        wire.SegmentRecord(camera_id=0, tile_index=0, action=wire.ACTION_REUSE),
        wire.SegmentRecord(
            camera_id=1, tile_index=63, action=wire.ACTION_REPLACE,
            positions=np.array([[-2.0, 0.125, 3.5]], np.float32),
            colors=np.array([[10, 20, 30]], np.uint8)),
        wire.SegmentRecord(camera_id=2, tile_index=500, action=wire.ACTION_REUSE),
    )
    yield "update_mixed", wire.SceneUpdate(
        frame_index=2**40, capture_timestamp_us=2**41, records=mixed), {
        "type": "scene_update", "frame_index": 2**40,
        "capture_timestamp_us": 2**41,
        "records": [
            {"camera_id": 0, "tile_index": 0, "action": "reuse"},
            {"camera_id": 1, "tile_index": 63, "action": "replace",
             "positions": [[-2.0, 0.125, 3.5]], "colors": [[10, 20, 30]]},
            {"camera_id": 2, "tile_index": 500, "action": "reuse"},
        ]}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    manifest = []
    for name, msg, expected in messages():
        data = wire.encode(msg)
        (OUT / f"{name}.bin").write_bytes(data)
        manifest.append({"file": f"{name}.bin", "bytes": len(data), **expected})
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {len(manifest)} vectors to {OUT}")


if __name__ == "__main__":
    main()
