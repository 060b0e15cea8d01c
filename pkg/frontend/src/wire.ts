/**
 * Binary wire protocol, byte-compatible with the server.
 *
 * Every message: 26-byte little-endian header
 *   magic "TORS" | version u8 | msgType u8 | frameIndex u64 | timestampUs u64
 *   | recordCount u32
 * followed by a per-type body. SCENE_UPDATE bodies are recordCount segment
 * records: 8-byte header (camera u8, tile u16, action u8, pointCount u32)
 * plus pointCount * 15 payload bytes (3 x f32 position, 3 x u8 RGB) for
 * REPLACE records.
 */

export const MAGIC = 0x53524f54; // "TORS" read as little-endian u32
export const VERSION = 1;
export const HEADER_SIZE = 26;

export const MSG_HELLO = 1;
export const MSG_VIEWPORT_FEEDBACK = 2;
export const MSG_SCENE_UPDATE = 3;
export const MSG_ACK = 4;
export const MSG_STATS = 5;

export const ACTION_REPLACE = 1;
export const ACTION_REUSE = 2;
export const POINT_BYTES = 15;

export interface SegmentRecord {
  cameraId: number;
  tileIndex: number;
  action: number;
  positions: Float32Array; // length 3 * pointCount
  colors: Uint8Array;      // length 3 * pointCount
}

export interface SceneUpdate {
  type: "scene_update";
  frameIndex: bigint;
  captureTimestampUs: bigint;
  records: SegmentRecord[];
}

export interface Stats {
  type: "stats";
  sendTimestampUs: bigint;
  echoTimestampUs: bigint;
  serverRecvTimestampUs: bigint;
  fps: number;
  latencyMs: number;
  theta: number;
  pointBudget: number;
  bytesPerSecond: number;
  reuseRatio: number;
  predictedYaw: number;
}

export interface Hello {
  type: "hello";
  sendTimestampUs: bigint;
  fovH: number;
  capabilities: number;
}

export interface ViewportFeedback {
  type: "viewport_feedback";
  sendTimestampUs: bigint;
  stateTimestampUs: bigint;
  position: [number, number, number];
  yaw: number;
  pitch: number;
  fovH: number;
  clockOffsetUs: bigint;
  flags: number;
}

export interface Ack {
  type: "ack";
  frameIndex: bigint;
  renderCompleteTimestampUs: bigint;
  sendTimestampUs: bigint;
}

export type WireMessage = Hello | ViewportFeedback | SceneUpdate | Ack | Stats;

export class DecodeError extends Error {
  constructor(message: string, public offset: number) {
    super(`${message} (offset ${offset})`);
  }
}

function header(msgType: number, frameIndex: bigint, timestampUs: bigint,
                recordCount: number, bodyBytes: number): [DataView, Uint8Array] {
  const buf = new ArrayBuffer(HEADER_SIZE + bodyBytes);
  const view = new DataView(buf);
  view.setUint32(0, MAGIC, true);
  view.setUint8(4, VERSION);
  view.setUint8(5, msgType);
  view.setBigUint64(6, frameIndex, true);
  view.setBigUint64(14, timestampUs, true);
  view.setUint32(22, recordCount, true);
  return [view, new Uint8Array(buf)];
}

export function encodeHello(msg: Omit<Hello, "type">): Uint8Array {
  const [view, bytes] = header(MSG_HELLO, 0n, msg.sendTimestampUs, 0, 8);
  view.setFloat32(26, msg.fovH, true);
  view.setUint32(30, msg.capabilities, true);
  return bytes;
}

export function encodeFeedback(msg: Omit<ViewportFeedback, "type">): Uint8Array {
  const [view, bytes] = header(MSG_VIEWPORT_FEEDBACK, 0n, msg.sendTimestampUs, 0, 41);
  view.setBigUint64(26, msg.stateTimestampUs, true);
  view.setFloat32(34, msg.position[0], true);
  view.setFloat32(38, msg.position[1], true);
  view.setFloat32(42, msg.position[2], true);
  view.setFloat32(46, msg.yaw, true);
  view.setFloat32(50, msg.pitch, true);
  view.setFloat32(54, msg.fovH, true);
  view.setBigInt64(58, msg.clockOffsetUs, true);
  view.setUint8(66, msg.flags);
  return bytes;
}

export function encodeAck(msg: Omit<Ack, "type">): Uint8Array {
  const [view, bytes] = header(MSG_ACK, msg.frameIndex, msg.sendTimestampUs, 0, 8);
  view.setBigUint64(26, msg.renderCompleteTimestampUs, true);
  return bytes;
}

function need(view: DataView, offset: number, count: number, what: string) {
  if (offset + count > view.byteLength) {
    throw new DecodeError(`truncated while reading ${what}`, offset);
  }
}

export function decode(data: ArrayBuffer | Uint8Array): WireMessage {
  const u8 = data instanceof Uint8Array ? data : new Uint8Array(data);
  const view = new DataView(u8.buffer, u8.byteOffset, u8.byteLength);
  need(view, 0, HEADER_SIZE, "header");
  if (view.getUint32(0, true) !== MAGIC) {
    throw new DecodeError("bad magic", 0);
  }
  if (view.getUint8(4) !== VERSION) {
    throw new DecodeError(`unsupported version ${view.getUint8(4)}`, 4);
  }
  const msgType = view.getUint8(5);
  const frameIndex = view.getBigUint64(6, true);
  const timestampUs = view.getBigUint64(14, true);
  const recordCount = view.getUint32(22, true);
  let off = HEADER_SIZE;

  if (msgType === MSG_HELLO) {
    need(view, off, 8, "hello body");
    return {
      type: "hello", sendTimestampUs: timestampUs,
      fovH: view.getFloat32(off, true),
      capabilities: view.getUint32(off + 4, true),
    };
  }

  if (msgType === MSG_VIEWPORT_FEEDBACK) {
    need(view, off, 41, "feedback body");
    return {
      type: "viewport_feedback", sendTimestampUs: timestampUs,
      stateTimestampUs: view.getBigUint64(off, true),
      position: [view.getFloat32(off + 8, true), view.getFloat32(off + 12, true),
                 view.getFloat32(off + 16, true)],
      yaw: view.getFloat32(off + 20, true),
      pitch: view.getFloat32(off + 24, true),
      fovH: view.getFloat32(off + 28, true),
      clockOffsetUs: view.getBigInt64(off + 32, true),
      flags: view.getUint8(off + 40),
    };
  }

  if (msgType === MSG_SCENE_UPDATE) {
    const records: SegmentRecord[] = [];
    for (let r = 0; r < recordCount; r++) {
      need(view, off, 8, "record header");
      const cameraId = view.getUint8(off);
      const tileIndex = view.getUint16(off + 1, true);
      const action = view.getUint8(off + 3);
      const pointCount = view.getUint32(off + 4, true);
      off += 8;
      if (action !== ACTION_REPLACE && action !== ACTION_REUSE) {
        throw new DecodeError(`unknown record action ${action}`, off - 5);
      }
      if (action === ACTION_REUSE && pointCount !== 0) {
        throw new DecodeError("REUSE record with nonzero count", off - 4);
      }
      const positions = new Float32Array(pointCount * 3);
      const colors = new Uint8Array(pointCount * 3);
      if (action === ACTION_REPLACE && pointCount > 0) {
        need(view, off, pointCount * POINT_BYTES, "record payload");
        for (let i = 0; i < pointCount; i++) {
          const base = off + i * POINT_BYTES;
          positions[i * 3] = view.getFloat32(base, true);
          positions[i * 3 + 1] = view.getFloat32(base + 4, true);
          positions[i * 3 + 2] = view.getFloat32(base + 8, true);
          colors[i * 3] = view.getUint8(base + 12);
          colors[i * 3 + 1] = view.getUint8(base + 13);
          colors[i * 3 + 2] = view.getUint8(base + 14);
        }
        off += pointCount * POINT_BYTES;
      }
      records.push({ cameraId, tileIndex, action, positions, colors });
    }
    if (off !== view.byteLength) {
      throw new DecodeError("trailing bytes after last record", off);
    }
    return { type: "scene_update", frameIndex, captureTimestampUs: timestampUs, records };
  }

  if (msgType === MSG_ACK) {
    need(view, off, 8, "ack body");
    return {
      type: "ack", frameIndex, sendTimestampUs: timestampUs,
      renderCompleteTimestampUs: view.getBigUint64(off, true),
    };
  }

  if (msgType === MSG_STATS) {
    need(view, off, 44, "stats body");
    return {
      type: "stats", sendTimestampUs: timestampUs,
      echoTimestampUs: view.getBigUint64(off, true),
      serverRecvTimestampUs: view.getBigUint64(off + 8, true),
      fps: view.getFloat32(off + 16, true),
      latencyMs: view.getFloat32(off + 20, true),
      theta: view.getFloat32(off + 24, true),
      pointBudget: view.getUint32(off + 28, true),
      bytesPerSecond: view.getFloat32(off + 32, true),
      reuseRatio: view.getFloat32(off + 36, true),
      predictedYaw: view.getFloat32(off + 40, true),
    };
  }

  throw new DecodeError(`unknown message type ${msgType}`, 5);
}
