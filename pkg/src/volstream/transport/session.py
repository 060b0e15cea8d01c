"""Per-client transmission sessions and the deterministic simulation driver.

A SessionCore holds everything one client costs the server: viewport
trajectory, clock offset, which segment versions the client has, the
bandwidth controller, and metrics. The same core runs under the virtual-clock
simulator (below) and the live asyncio server (server.py).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from ..geometry import ScenePointCloud
from ..viewport import (PredictedViewport, Predictor, TrajectoryRecorder,
                        ViewportState, density_weight, make_predictor,
                        select_indices)
from . import wire
from .adapt import BandwidthController
from .metrics import SessionMetrics


@dataclass(frozen=True)
class SessionConfig:
    tick_us: int = 33_333
    selective: bool = True
    viewport_adapt: bool = True
    predictor: str = "constant-velocity"
    segment_ttl_us: int = 2_000_000
    feedback_stale_after_us: int = 1_000_000
    stats_interval_us: int = 1_000_000
    selection_seed: int = 0


class SessionCore:
    """Server-side state machine for one client."""

    def __init__(self, config: SessionConfig, controller: BandwidthController):
        self.config = config
        self.controller = controller
        self.predictor: Predictor = make_predictor(config.predictor)
        self.recorder = TrajectoryRecorder()
        self.metrics = SessionMetrics()
        self.clock_offset_us = 0          # client clock minus server clock
        self.hello: wire.Hello | None = None
        self.hello_recv_us: int | None = None
        self.last_feedback_us: int | None = None
        self.last_stats_us = -10**18
        self.sent_frame: dict[tuple[int, int], int] = {}
        self.last_touch_us: dict[tuple[int, int], int] = {}
        self.theta = 0.0
        self.point_budget = 0
        self.reuse_ratio = 0.0
        self.last_predicted_yaw = 0.0

    # -- inbound ----------------------------------------------------------

    def on_message(self, msg: wire.WireMessage, now_us: int) -> list[wire.WireMessage]:
        """Process a client message; returns any immediate replies."""
        if isinstance(msg, wire.Hello):
            self.hello = msg
            self.hello_recv_us = now_us
            return [self._stats(now_us, echo=msg.send_timestamp_us,
                                recv=now_us)]
        if isinstance(msg, wire.ViewportFeedback):
            self.clock_offset_us = msg.clock_offset_us
            self.last_feedback_us = now_us
            state = ViewportState(
                timestamp_us=msg.state_timestamp_us - msg.clock_offset_us,
                position=msg.position, yaw=msg.yaw, pitch=msg.pitch,
                fov_h=msg.fov_h if 0 < msg.fov_h < np.pi else np.deg2rad(90))
            self.recorder.ingest(state)
            return []
        if isinstance(msg, wire.Ack):
            corrected = msg.render_complete_timestamp_us - self.clock_offset_us
            self.metrics.record_ack(msg.frame_index, corrected)
            return []
        return []

    def _stats(self, now_us: int, echo: int = 0, recv: int = 0) -> wire.Stats:
        summary = self.metrics.summary()
        return wire.Stats(
            send_timestamp_us=now_us, echo_timestamp_us=echo,
            server_recv_timestamp_us=recv,
            fps=summary["fps"]["avg"], latency_ms=summary["latency_ms"]["avg"],
            theta=self.theta, point_budget=self.point_budget,
            bytes_per_second=summary["throughput_bps"] / 8,
            reuse_ratio=self.reuse_ratio, predicted_yaw=self.last_predicted_yaw)

    # -- outbound ---------------------------------------------------------

    def feedback_stale(self, now_us: int) -> bool:
        return (self.last_feedback_us is None
                or now_us - self.last_feedback_us > self.config.feedback_stale_after_us)

    def maybe_stats(self, now_us: int) -> wire.Stats | None:
        if now_us - self.last_stats_us >= self.config.stats_interval_us:
            self.last_stats_us = now_us
            return self._stats(now_us)
        return None

    def build_update(self, scene: ScenePointCloud, frame_index: int,
                     capture_ts_us: int, now_us: int) -> wire.SceneUpdate | None:
        """Assemble the tick's SCENE_UPDATE for this client, or None when the
        client has no viewport on record yet."""
        if len(self.recorder.trajectory) == 0:
            return None
        if self.feedback_stale(now_us):
            self.metrics.stale_feedback_ticks += 1

        theta, budget = self.controller.adapt()
        self.theta, self.point_budget = theta, budget

        keys = sorted(scene.segments)
        records: list[wire.SegmentRecord] = []
        if self.config.viewport_adapt:
            pred = self.predictor.predict(self.recorder.trajectory,
                                          self.config.tick_us)
            self.last_predicted_yaw = pred.yaw
            in_range = self._segment_ranges(scene, keys, pred)
            replace_keys = []
            for k, rng in zip(keys, in_range):
                if not rng:
                    continue
                version = scene.segment_frame.get(k, 0)
                fresh = self.sent_frame.get(k)
                evicted = (k not in self.last_touch_us
                           or now_us - self.last_touch_us[k] > self.config.segment_ttl_us)
                if fresh is None or version > fresh or evicted:
                    replace_keys.append(k)
                else:
                    records.append(wire.SegmentRecord(
                        camera_id=k[0], tile_index=k[1], action=wire.ACTION_REUSE))
                    self.last_touch_us[k] = now_us
            records.extend(self._replace_records(
                scene, replace_keys, pred, budget, frame_index))
            for k in replace_keys:
                self.sent_frame[k] = scene.segment_frame.get(k, 0)
                self.last_touch_us[k] = now_us
        else:
            # ablation: the whole current cloud, full density, every tick
            for k in keys:
                batch = scene.segments[k]
                records.append(wire.SegmentRecord(
                    camera_id=k[0], tile_index=k[1], action=wire.ACTION_REPLACE,
                    positions=batch.positions.astype(np.float32),
                    colors=batch.colors))
                self.sent_frame[k] = scene.segment_frame.get(k, 0)
                self.last_touch_us[k] = now_us

        if not records:
            return None
        return wire.SceneUpdate(frame_index=frame_index,
                                capture_timestamp_us=capture_ts_us,
                                records=tuple(records))

    def _segment_ranges(self, scene: ScenePointCloud, keys,
                        pred: PredictedViewport) -> list[bool]:
        in_range = []
        for k in keys:
            batch = scene.segments[k]
            if len(batch) == 0:
                in_range.append(False)
                continue
            rel = batch.positions - np.asarray(pred.position)
            n = np.linalg.norm(rel, axis=1)
            ok = n > 1e-12
            dirs = np.zeros_like(rel)
            dirs[ok] = rel[ok] / n[ok, None]
            w = density_weight(dirs, pred)
            in_range.append(bool((w > 0).any() or (~ok).any()))
        return in_range

    def _replace_records(self, scene: ScenePointCloud, replace_keys,
                         pred: PredictedViewport, budget: int,
                         frame_index: int) -> list[wire.SegmentRecord]:
        if not replace_keys:
            return []
        batches = [scene.segments[k] for k in replace_keys]
        sizes = [len(b) for b in batches]
        if sum(sizes) == 0:
            return [wire.SegmentRecord(camera_id=k[0], tile_index=k[1],
                                       action=wire.ACTION_REPLACE)
                    for k in replace_keys]
        all_pos = np.concatenate([b.positions for b in batches if len(b)])
        seed = self.config.selection_seed ^ (frame_index * 0x9E37)
        chosen = select_indices(all_pos, pred, budget, seed)
        records = []
        offset = 0
        for k, b, size in zip(replace_keys, batches, sizes):
            sel = chosen[(chosen >= offset) & (chosen < offset + size)] - offset
            records.append(wire.SegmentRecord(
                camera_id=k[0], tile_index=k[1], action=wire.ACTION_REPLACE,
                positions=b.positions[sel].astype(np.float32),
                colors=b.colors[sel]))
            offset += size
        return records


# ---------------------------------------------------------------------------
# scripted client (simulation + live driving)

@dataclass
class ClientCache:
    """Mirror of the client-side segment store, for assertions and rendering."""

    segments: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = field(
        default_factory=dict)
    last_update_frame: dict[tuple[int, int], int] = field(default_factory=dict)
    last_touch_us: dict[tuple[int, int], int] = field(default_factory=dict)
    ttl_us: int = 2_000_000

    def apply(self, update: wire.SceneUpdate, now_us: int) -> None:
        for rec in update.records:
            key = (rec.camera_id, rec.tile_index)
            if rec.action == wire.ACTION_REPLACE:
                self.segments[key] = (rec.positions.astype(np.float64), rec.colors)
                self.last_update_frame[key] = update.frame_index
            self.last_touch_us[key] = now_us

    def evict_expired(self, now_us: int) -> list[tuple[int, int]]:
        dead = [k for k, t in self.last_touch_us.items()
                if now_us - t > self.ttl_us]
        for k in dead:
            self.segments.pop(k, None)
            self.last_update_frame.pop(k, None)
            self.last_touch_us.pop(k, None)
        return dead

    def total_points(self) -> int:
        return sum(len(p) for p, _ in self.segments.values())


@dataclass
class ScriptedViewpoint:
    """Deterministic head-motion script: sinusoidal yaw sweep by default."""

    position: tuple[float, float, float] = (0.0, 0.2, 1.0)
    yaw0: float = 0.0
    yaw_amplitude: float = np.deg2rad(50.0)
    yaw_period_us: int = 6_000_000
    pitch0: float = 0.0
    fov_h: float = np.deg2rad(90.0)

    def at(self, t_us: int) -> tuple[tuple[float, float, float], float, float]:
        yaw = self.yaw0 + self.yaw_amplitude * np.sin(
            2 * np.pi * t_us / self.yaw_period_us)
        return self.position, float(yaw), self.pitch0


class ScriptedClient:
    """Client model: HELLO, periodic feedback, ACK after a fixed render time,
    NTP-style offset estimation from the HELLO/STATS exchange."""

    def __init__(self, script: ScriptedViewpoint, feedback_period_us: int = 50_000,
                 render_delay_us: int = 4_000, clock_skew_us: int = 0,
                 ttl_us: int = 2_000_000):
        self.script = script
        self.feedback_period_us = feedback_period_us
        self.render_delay_us = render_delay_us
        self.clock_skew_us = clock_skew_us
        self.cache = ClientCache(ttl_us=ttl_us)
        self.offset_estimate_us = clock_skew_us  # exact until measured
        self.hello_sent_at: int | None = None
        self.offset_measured = False
        self.decoded_updates = 0

    def client_clock(self, server_now_us: int) -> int:
        return server_now_us + self.clock_skew_us

    def hello(self, now_us: int) -> wire.Hello:
        self.hello_sent_at = self.client_clock(now_us)
        return wire.Hello(fov_h=self.script.fov_h,
                          send_timestamp_us=self.hello_sent_at)

    def feedback(self, now_us: int) -> wire.ViewportFeedback:
        pos, yaw, pitch = self.script.at(now_us)
        t_client = self.client_clock(now_us)
        return wire.ViewportFeedback(
            state_timestamp_us=t_client, position=pos, yaw=yaw, pitch=pitch,
            fov_h=self.script.fov_h, clock_offset_us=self.offset_estimate_us,
            send_timestamp_us=t_client)

    def on_stats(self, msg: wire.Stats, now_us: int) -> None:
        if (not self.offset_measured and self.hello_sent_at is not None
                and msg.echo_timestamp_us == self.hello_sent_at):
            t0 = self.hello_sent_at
            t1 = msg.server_recv_timestamp_us
            t2 = msg.send_timestamp_us
            t3 = self.client_clock(now_us)
            self.offset_estimate_us = int(round(((t0 - t1) + (t3 - t2)) / 2))
            self.offset_measured = True

    def on_update(self, msg: wire.SceneUpdate, now_us: int) -> wire.Ack:
        self.cache.apply(msg, now_us)
        self.cache.evict_expired(now_us)
        self.decoded_updates += 1
        render_done = self.client_clock(now_us) + self.render_delay_us
        return wire.Ack(frame_index=msg.frame_index,
                        render_complete_timestamp_us=render_done,
                        send_timestamp_us=render_done)


# ---------------------------------------------------------------------------
# deterministic event-driven simulation

@dataclass
class SimEvent:
    time_us: int
    seq: int
    kind: str
    payload: object = None
    client_id: int = 0

    def __lt__(self, other):
        return (self.time_us, self.seq) < (other.time_us, other.seq)


@dataclass
class SimNetwork:
    uplink_delay_us: int = 300
    downlink_delay_us: int = 300


@dataclass
class SimResult:
    metrics: list[SessionMetrics]
    clients: list[ScriptedClient]
    sessions: list[SessionCore]
    updates: list
    theta_trace: list[float]
    predicted_yaws: list[tuple[int, float]]
    duration_us: int


def run_simulation(pipeline, frames_by_camera, grid, controllers,
                   session_config: SessionConfig, clients: list[ScriptedClient],
                   duration_ticks: int,
                   recon_cost_us_per_point: float = 0.5,
                   tick_overhead_us: int = 2_000,
                   network: SimNetwork | None = None) -> SimResult:
    """Drive the full pipeline under a virtual clock.

    pipeline: a reconstruction.SelectivePipeline with poses/intrinsics set.
    frames_by_camera: dict camera_id -> list of RgbdFrame, one per tick.
    controllers: one BandwidthController per client.
    """
    net = network or SimNetwork()
    cfg = session_config
    sessions = [SessionCore(cfg, ctrl) for ctrl in controllers]

    events: list[SimEvent] = []
    seq = 0

    def push(t_us: int, kind: str, payload=None, client_id: int = 0):
        nonlocal seq
        heapq.heappush(events, SimEvent(int(t_us), seq, kind, payload, client_id))
        seq += 1

    n_frames = min(len(v) for v in frames_by_camera.values())
    duration_ticks = min(duration_ticks, n_frames)
    duration_us = duration_ticks * cfg.tick_us

    for ci, client in enumerate(clients):
        push(0, "client_hello", client_id=ci)
        t = 0
        while t < duration_us:
            push(t, "client_feedback", client_id=ci)
            t += client.feedback_period_us
    for k in range(duration_ticks):
        push(k * cfg.tick_us, "tick", payload=k)

    synthesis_free_at = 0
    theta_trace: list[float] = []
    predicted_yaws: list[tuple[int, float]] = []
    drain_until = duration_us + 2_000_000  # let in-flight deliveries finish

    while events:
        ev = heapq.heappop(events)
        if ev.time_us > drain_until:
            break
        now = ev.time_us

        if ev.kind == "client_hello":
            client = clients[ev.client_id]
            push(now + net.uplink_delay_us, "server_rx",
                 payload=wire.encode(client.hello(now)), client_id=ev.client_id)

        elif ev.kind == "client_feedback":
            client = clients[ev.client_id]
            push(now + net.uplink_delay_us, "server_rx",
                 payload=wire.encode(client.feedback(now)), client_id=ev.client_id)

        elif ev.kind == "server_rx":
            session = sessions[ev.client_id]
            msg = wire.decode(ev.payload)
            for reply in session.on_message(msg, now):
                data = wire.encode(reply)
                receipt = session.controller.bucket.send(len(data), now)
                session.controller.observe(receipt)
                push(receipt.completion_us + net.downlink_delay_us, "client_rx",
                     payload=data, client_id=ev.client_id)

        elif ev.kind == "client_rx":
            client = clients[ev.client_id]
            msg = wire.decode(ev.payload)
            if isinstance(msg, wire.Stats):
                client.on_stats(msg, now)
            elif isinstance(msg, wire.SceneUpdate):
                ack = client.on_update(msg, now)
                push(now + client.render_delay_us + net.uplink_delay_us,
                     "server_rx", payload=wire.encode(ack),
                     client_id=ev.client_id)

        elif ev.kind == "tick":
            k = ev.payload
            if now < synthesis_free_at:
                for s in sessions:
                    s.metrics.record_skip()
                continue
            # synthesis: ingest the newest frames, advance the fused cloud;
            # reconstruction fidelity follows the most demanding client
            theta_recon = min((s.controller.adapt()[0] for s in sessions),
                              default=0.0)
            regen_points = 0
            capture_ts = None
            for cid in sorted(frames_by_camera):
                frame = frames_by_camera[cid][k]
                capture_ts = frame.timestamp_us if capture_ts is None \
                    else min(capture_ts, frame.timestamp_us)
                update = pipeline.step(frame, grid, theta=theta_recon,
                                       force_all=not cfg.selective)
                regen_points += update.regenerated_points
            recon_us = int(tick_overhead_us + recon_cost_us_per_point * regen_points)
            synthesis_free_at = now + recon_us
            send_start = synthesis_free_at
            theta_trace.append(theta_recon)

            live = [u for u in pipeline.updates if not u.stale]
            reused = sum(len(u.reused) for u in live)
            total = sum(len(u.reused) + len(u.regenerated) for u in live)
            snapshot = pipeline.scene.snapshot()
            for ci, session in enumerate(sessions):
                session.reuse_ratio = reused / total if total else 0.0
                if session.controller.bucket.busy_until_us > send_start:
                    session.metrics.record_skip()
                    continue
                update = session.build_update(snapshot, k, capture_ts, send_start)
                if update is None:
                    continue
                if cfg.viewport_adapt and len(session.recorder.trajectory) >= 1:
                    pred = session.predictor.predict(
                        session.recorder.trajectory, cfg.tick_us)
                    predicted_yaws.append((now, pred.yaw))
                data = wire.encode(update)
                receipt = session.controller.bucket.send(len(data), send_start)
                session.controller.observe(receipt)
                late = receipt.completion_us - send_start > cfg.tick_us
                session.metrics.record_send(
                    frame_index=k, capture_timestamp_us=capture_ts,
                    send_start_us=receipt.start_us,
                    send_complete_us=receipt.completion_us,
                    nbytes=len(data), late=late)
                push(receipt.completion_us + net.downlink_delay_us, "client_rx",
                     payload=data, client_id=ci)
                stats = session.maybe_stats(send_start)
                if stats is not None:
                    sdata = wire.encode(stats)
                    receipt = session.controller.bucket.send(len(sdata), send_start)
                    session.controller.observe(receipt)
                    push(receipt.completion_us + net.downlink_delay_us,
                         "client_rx", payload=sdata, client_id=ci)

    return SimResult(metrics=[s.metrics for s in sessions], clients=clients,
                     sessions=sessions, updates=list(pipeline.updates),
                     theta_trace=theta_trace, predicted_yaws=predicted_yaws,
                     duration_us=duration_us)
