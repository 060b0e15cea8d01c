/**
 * Streaming client: handshake, clock-offset estimation, periodic viewport
 * feedback, decode-and-merge of scene updates, ACKs, reconnect.
 *
 * The socket is injectable so the same logic runs in the browser (WebSocket)
 * and in tests (any object with the same surface).
 */

import { ClientSceneCache } from "./cache.js";
import {
  Ack, Stats, WireMessage, decode, encodeAck, encodeFeedback, encodeHello,
} from "./wire.js";
import { ViewpointState } from "./camera.js";

export interface SocketLike {
  binaryType: string;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: ArrayBuffer }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: Uint8Array): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientEvents {
  onUpdatePoints?: (totalPoints: number) => void;
  onStats?: (stats: Stats) => void;
  onConnection?: (connected: boolean) => void;
  onDecodeError?: (message: string) => void;
}

export interface ClientOptions {
  url: string;
  fovH: number;
  feedbackPeriodMs?: number;
  reconnectDelayMs?: number;
  socketFactory?: SocketFactory;
  now?: () => number; // ms clock, injectable for tests
  events?: ClientEvents;
}

export class StreamingClient {
  readonly cache = new ClientSceneCache();
  connected = false;
  clockOffsetUs = 0n;
  offsetMeasured = false;
  bytesReceived = 0;
  updatesReceived = 0;
  lastStats: Stats | null = null;
  /** frames decoded but not yet acked; the render loop acks after drawing */
  pendingAcks: bigint[] = [];

  private socket: SocketLike | null = null;
  private helloSentAtUs = 0n;
  private feedbackTimer: ReturnType<typeof setInterval> | null = null;
  private stopped = false;
  private viewpoint: () => ViewpointState;

  constructor(private opts: ClientOptions, viewpoint: () => ViewpointState) {
    this.viewpoint = viewpoint;
  }

  private nowMs(): number {
    return this.opts.now ? this.opts.now() : performance.now();
  }

  private nowUs(): bigint {
    return BigInt(Math.round(this.nowMs() * 1000));
  }

  start(): void {
    this.stopped = false;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    if (this.feedbackTimer !== null) clearInterval(this.feedbackTimer);
    this.feedbackTimer = null;
    this.socket?.close();
  }

  private connect(): void {
    const factory = this.opts.socketFactory
      ?? ((url: string) => new WebSocket(url) as unknown as SocketLike);
    const sock = factory(this.opts.url);
    sock.binaryType = "arraybuffer";
    this.socket = sock;

    sock.onopen = () => {
      this.connected = true;
      this.offsetMeasured = false;
      this.opts.events?.onConnection?.(true);
      this.helloSentAtUs = this.nowUs();
      sock.send(encodeHello({
        sendTimestampUs: this.helloSentAtUs,
        fovH: this.opts.fovH,
        capabilities: 0,
      }));
      if (this.feedbackTimer !== null) clearInterval(this.feedbackTimer);
      this.feedbackTimer = setInterval(
        () => this.sendFeedback(), this.opts.feedbackPeriodMs ?? 50);
    };

    sock.onmessage = (ev) => {
      this.bytesReceived += ev.data.byteLength;
      let msg: WireMessage;
      try {
        msg = decode(ev.data);
      } catch (err) {
        this.opts.events?.onDecodeError?.(String(err));
        return; // drop malformed input, keep the session alive
      }
      this.handle(msg);
    };

    sock.onclose = () => {
      this.connected = false;
      this.opts.events?.onConnection?.(false);
      if (this.feedbackTimer !== null) clearInterval(this.feedbackTimer);
      this.feedbackTimer = null;
      if (!this.stopped) {
        setTimeout(() => this.connect(), this.opts.reconnectDelayMs ?? 1000);
      }
    };
    sock.onerror = () => { /* close follows */ };
  }

  private handle(msg: WireMessage): void {
    if (msg.type === "stats") {
      if (!this.offsetMeasured && msg.echoTimestampUs === this.helloSentAtUs) {
        const t0 = this.helloSentAtUs;
        const t1 = msg.serverRecvTimestampUs;
        const t2 = msg.sendTimestampUs;
        const t3 = this.nowUs();
        this.clockOffsetUs = ((t0 - t1) + (t3 - t2)) / 2n;
        this.offsetMeasured = true;
      }
      this.lastStats = msg;
      this.opts.events?.onStats?.(msg);
      return;
    }
    if (msg.type === "scene_update") {
      this.cache.apply(msg, this.nowMs());
      this.updatesReceived++;
      this.pendingAcks.push(msg.frameIndex);
      this.opts.events?.onUpdatePoints?.(this.cache.totalPoints());
    }
  }

  /** Called by the render loop after the first draw of newly arrived frames. */
  ackRendered(): void {
    if (!this.socket || !this.connected) return;
    for (const frameIndex of this.pendingAcks) {
      const ts = this.nowUs();
      const ack: Omit<Ack, "type"> = {
        frameIndex,
        renderCompleteTimestampUs: ts,
        sendTimestampUs: ts,
      };
      this.socket.send(encodeAck(ack));
    }
    this.pendingAcks = [];
  }

  sendFeedback(): void {
    if (!this.socket || !this.connected) return;
    const vp = this.viewpoint();
    const ts = this.nowUs();
    this.socket.send(encodeFeedback({
      sendTimestampUs: ts,
      stateTimestampUs: ts,
      position: vp.position,
      yaw: vp.yaw,
      pitch: vp.pitch,
      fovH: this.opts.fovH,
      clockOffsetUs: this.clockOffsetUs,
      flags: 0,
    }));
  }
}
