"""Live streaming server.

Two listeners share one synthesis pipeline and per-client SessionCores:

* framed TCP (u32 little-endian length prefix per wire message), and
* a WebSocket endpoint for browsers (binary frames carry the identical
  wire-message bytes). The WebSocket layer is a minimal server-side RFC 6455
  implementation; the usual helper packages are not available in this
  environment. The HTTP listener also serves the viewer's static files when
  a directory is configured.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

from .config import PipelineConfig
from .reconstruction import SelectivePipeline
from .runner import load_source, resolve_poses, resolve_theta_curve
from .transport.adapt import BandwidthController
from .transport.clock import WallClock
from .transport.session import SessionConfig, SessionCore
from .transport import wire

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

_MIME = {".html": "text/html", ".js": "text/javascript",
         ".css": "text/css", ".map": "application/json",
         ".json": "application/json"}


@dataclass
class TickSnapshot:
    index: int
    capture_ts_us: int
    scene: object
    reuse_ratio: float


class PipelineHub:
    """Advances the shared pipeline at tick rate and fans snapshots out."""

    def __init__(self, cfg: PipelineConfig, selective: bool, clock: WallClock):
        self.cfg = cfg
        self.selective = selective
        self.clock = clock
        self.cond = asyncio.Condition()
        self.latest: TickSnapshot | None = None
        self.theta = 0.0
        frames, intrinsics, grid, gt = load_source(cfg)
        self.frames = frames
        self.grid = grid
        poses = resolve_poses(cfg, frames, intrinsics, gt)
        self.curve, _ = resolve_theta_curve(cfg, frames, grid)
        self.theta = self.curve.theta(cfg.bandwidth_bps)
        self.pipeline = SelectivePipeline(
            intrinsics=intrinsics, poses=poses, theta=self.theta,
            stride=cfg.flow_stride, window=cfg.flow_window,
            eps_eig=cfg.flow_eps_eig, lambda_depth=cfg.lambda_depth)
        self.n_frames = min(len(v) for v in frames.values())

    async def run(self, stop: asyncio.Event) -> None:
        from .geometry import RgbdFrame
        tick_s = self.cfg.tick_us / 1e6
        k = 0
        while not stop.is_set():
            t0 = self.clock.now_us()
            fi = k % self.n_frames
            for cid in sorted(self.frames):
                src = self.frames[cid][fi]
                # the capture sequence loops; frame indices must still move
                # forward for the reuse store's regeneration stamps
                frame = RgbdFrame(camera_id=cid, frame_index=k,
                                  timestamp_us=t0, color=src.color,
                                  depth=src.depth)
                self.pipeline.step(frame, self.grid, theta=self.theta,
                                   force_all=not self.selective)
            live = [u for u in self.pipeline.updates if not u.stale]
            reused = sum(len(u.reused) for u in live)
            total = sum(len(u.reused) + len(u.regenerated) for u in live)
            async with self.cond:
                self.latest = TickSnapshot(
                    index=k, capture_ts_us=t0,
                    scene=self.pipeline.scene.snapshot(),
                    reuse_ratio=reused / total if total else 0.0)
                self.cond.notify_all()
            k += 1
            elapsed = (self.clock.now_us() - t0) / 1e6
            await asyncio.sleep(max(0.0, tick_s - elapsed))

    async def next_tick(self, after: int) -> TickSnapshot:
        async with self.cond:
            await self.cond.wait_for(
                lambda: self.latest is not None and self.latest.index > after)
            return self.latest


class MessageStream:
    """Anything that can carry whole wire messages."""

    async def recv(self) -> bytes | None:
        raise NotImplementedError

    async def send(self, data: bytes) -> None:
        raise NotImplementedError


class FramedTcpStream(MessageStream):
    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self.reader = reader
        self.writer = writer

    async def recv(self) -> bytes | None:
        try:
            head = await self.reader.readexactly(4)
            (length,) = struct.unpack("<I", head)
            return await self.reader.readexactly(length)
        except (asyncio.IncompleteReadError, ConnectionError):
            return None

    async def send(self, data: bytes) -> None:
        self.writer.write(struct.pack("<I", len(data)) + data)
        await self.writer.drain()


class WebSocketStream(MessageStream):
    """Server side of RFC 6455: masked client frames in, unmasked binary out."""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self.reader = reader
        self.writer = writer

    async def recv(self) -> bytes | None:
        buffer = b""
        while True:
            try:
                head = await self.reader.readexactly(2)
            except (asyncio.IncompleteReadError, ConnectionError):
                return None
            fin = head[0] & 0x80
            opcode = head[0] & 0x0F
            masked = head[1] & 0x80
            length = head[1] & 0x7F
            try:
                if length == 126:
                    (length,) = struct.unpack(">H", await self.reader.readexactly(2))
                elif length == 127:
                    (length,) = struct.unpack(">Q", await self.reader.readexactly(8))
                mask = await self.reader.readexactly(4) if masked else b"\0\0\0\0"
                payload = await self.reader.readexactly(length)
            except (asyncio.IncompleteReadError, ConnectionError):
                return None
            if masked:
                payload = bytes(b ^ mask[i & 3] for i, b in enumerate(payload))
            if opcode == 0x8:  # close
                await self._send_frame(0x8, b"")
                return None
            if opcode == 0x9:  # ping
                await self._send_frame(0xA, payload)
                continue
            if opcode in (0x0, 0x1, 0x2):
                buffer += payload
                if fin:
                    return buffer
                continue

    async def send(self, data: bytes) -> None:
        await self._send_frame(0x2, data)

    async def _send_frame(self, opcode: int, payload: bytes) -> None:
        head = bytes([0x80 | opcode])
        n = len(payload)
        if n < 126:
            head += bytes([n])
        elif n < (1 << 16):
            head += bytes([126]) + struct.pack(">H", n)
        else:
            head += bytes([127]) + struct.pack(">Q", n)
        self.writer.write(head + payload)
        await self.writer.drain()


async def _client_session(stream: MessageStream, hub: PipelineHub,
                          cfg: PipelineConfig, session_cfg: SessionConfig,
                          clock: WallClock) -> None:
    controller = BandwidthController.create(cfg.bandwidth_bps, hub.curve,
                                            budget_anchors=cfg.budget_anchors,
                                            start_us=clock.now_us())
    core = SessionCore(session_cfg, controller)
    send_lock = asyncio.Lock()

    async def send_throttled(data: bytes) -> None:
        receipt = controller.bucket.send(len(data), clock.now_us())
        controller.observe(receipt)
        delay = (receipt.completion_us - clock.now_us()) / 1e6
        if delay > 0:
            await asyncio.sleep(delay)
        async with send_lock:
            await stream.send(data)

    async def reader_loop() -> None:
        while True:
            data = await stream.recv()
            if data is None:
                return
            try:
                msg = wire.decode(data)
            except Exception:
                continue  # malformed input never kills the session
            for reply in core.on_message(msg, clock.now_us()):
                await send_throttled(wire.encode(reply))

    async def sender_loop() -> None:
        last = -1
        while True:
            snap = await hub.next_tick(last)
            last = snap.index
            now = clock.now_us()
            core.reuse_ratio = snap.reuse_ratio
            if controller.bucket.busy_until_us > now:
                core.metrics.record_skip()
                continue
            update = core.build_update(snap.scene, snap.index,
                                       snap.capture_ts_us, now)
            if update is not None:
                data = wire.encode(update)
                receipt = controller.bucket.send(len(data), now)
                controller.observe(receipt)
                core.metrics.record_send(
                    frame_index=snap.index,
                    capture_timestamp_us=snap.capture_ts_us,
                    send_start_us=receipt.start_us,
                    send_complete_us=receipt.completion_us,
                    nbytes=len(data),
                    late=receipt.completion_us - now > session_cfg.tick_us)
                delay = (receipt.completion_us - clock.now_us()) / 1e6
                if delay > 0:
                    await asyncio.sleep(delay)
                async with send_lock:
                    await stream.send(data)
            stats = core.maybe_stats(clock.now_us())
            if stats is not None:
                await send_throttled(wire.encode(stats))

    read_task = asyncio.create_task(reader_loop())
    send_task = asyncio.create_task(sender_loop())
    try:
        done, _ = await asyncio.wait({read_task, send_task},
                                     return_when=asyncio.FIRST_COMPLETED)
        for task in done:  # session bugs must not vanish silently
            exc = task.exception()
            if exc is not None:
                print(f"session task failed: {exc!r}", flush=True)
    finally:
        read_task.cancel()
        send_task.cancel()


async def _http_or_ws(reader: asyncio.StreamReader, writer: asyncio.StreamWriter,
                      hub: PipelineHub, cfg: PipelineConfig,
                      session_cfg: SessionConfig, clock: WallClock,
                      static_dir: Path | None) -> None:
    try:
        request = await reader.readuntil(b"\r\n\r\n")
    except (asyncio.IncompleteReadError, ConnectionError):
        writer.close()
        return
    head = request.decode("latin1")
    lines = head.split("\r\n")
    target = lines[0].split(" ")[1] if len(lines[0].split(" ")) > 1 else "/"
    headers = {}
    for line in lines[1:]:
        if ":" in line:
            k, v = line.split(":", 1)
            headers[k.strip().lower()] = v.strip()

    if headers.get("upgrade", "").lower() == "websocket":
        key = headers.get("sec-websocket-key", "")
        accept = base64.b64encode(
            hashlib.sha1((key + _WS_GUID).encode()).digest()).decode()
        writer.write((
            "HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\nConnection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {accept}\r\n\r\n").encode())
        await writer.drain()
        try:
            await _client_session(WebSocketStream(reader, writer), hub, cfg,
                                  session_cfg, clock)
        finally:
            writer.close()
        return

    # plain HTTP: serve the viewer bundle if present
    status, body, ctype = 404, b"not found", "text/plain"
    if static_dir is not None:
        rel = "index.html" if target in ("/", "") else target.lstrip("/")
        path = (static_dir / rel).resolve()
        if str(path).startswith(str(static_dir.resolve())) and path.is_file():
            body = path.read_bytes()
            ctype = _MIME.get(path.suffix, "application/octet-stream")
            status = 200
    writer.write((f"HTTP/1.1 {status} {'OK' if status == 200 else 'Not Found'}\r\n"
                  f"Content-Type: {ctype}\r\n"
                  f"Content-Length: {len(body)}\r\n"
                  "Access-Control-Allow-Origin: *\r\n\r\n").encode() + body)
    await writer.drain()
    writer.close()


async def serve(cfg: PipelineConfig, host: str = "127.0.0.1",
                tcp_port: int = 9360, ws_port: int = 9361,
                selective: bool = True, viewport_adapt: bool = True,
                duration_s: float | None = None,
                static_dir: str | None = None,
                ready_event: asyncio.Event | None = None) -> None:
    clock = WallClock()
    hub = PipelineHub(cfg, selective, clock)
    session_cfg = SessionConfig(tick_us=cfg.tick_us, selective=selective,
                                viewport_adapt=viewport_adapt,
                                predictor=cfg.predictor,
                                segment_ttl_us=cfg.segment_ttl_us,
                                selection_seed=cfg.seed)
    stop = asyncio.Event()
    static = Path(static_dir) if static_dir else _default_static_dir()

    async def tcp_handler(reader, writer):
        await _client_session(FramedTcpStream(reader, writer), hub, cfg,
                              session_cfg, clock)
        writer.close()

    async def ws_handler(reader, writer):
        await _http_or_ws(reader, writer, hub, cfg, session_cfg, clock, static)

    tcp_server = await asyncio.start_server(tcp_handler, host, tcp_port)
    ws_server = await asyncio.start_server(ws_handler, host, ws_port)
    hub_task = asyncio.create_task(hub.run(stop))

    def _watch(task: asyncio.Task) -> None:
        if not task.cancelled() and task.exception() is not None:
            print(f"pipeline hub failed: {task.exception()!r}", flush=True)

    hub_task.add_done_callback(_watch)
    print(f"listening: tcp://{host}:{tcp_port} ws://{host}:{ws_port}/", flush=True)
    if ready_event is not None:
        ready_event.set()
    try:
        if duration_s is not None:
            await asyncio.sleep(duration_s)
        else:
            await asyncio.Event().wait()
    finally:
        stop.set()
        hub_task.cancel()
        tcp_server.close()
        ws_server.close()


def _default_static_dir() -> Path | None:
    for cand in (Path(__file__).resolve().parents[2] / "frontend" / "dist",
                 Path("frontend/dist")):
        if cand.is_dir():
            return cand
    return None
