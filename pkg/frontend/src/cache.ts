/**
 * Client-side segment store. REPLACE swaps a segment's points; REUSE only
 * refreshes its last-touched time; segments the server stops mentioning
 * expire after the TTL (they left the predicted range).
 */

import { ACTION_REPLACE, SceneUpdate, SegmentRecord } from "./wire.js";

export interface CachedSegment {
  positions: Float32Array;
  colors: Uint8Array;
  lastUpdateFrame: bigint;
  lastTouchedMs: number;
}

export class ClientSceneCache {
  readonly segments = new Map<string, CachedSegment>();
  version = 0; // bumped whenever point data changes (renderer re-uploads)

  constructor(public ttlMs = 2000) {}

  static key(rec: { cameraId: number; tileIndex: number }): string {
    return `${rec.cameraId}:${rec.tileIndex}`;
  }

  apply(update: SceneUpdate, nowMs: number): void {
    for (const rec of update.records) {
      const key = ClientSceneCache.key(rec);
      if (rec.action === ACTION_REPLACE) {
        this.segments.set(key, {
          positions: rec.positions,
          colors: rec.colors,
          lastUpdateFrame: update.frameIndex,
          lastTouchedMs: nowMs,
        });
        this.version++;
      } else {
        const existing = this.segments.get(key);
        if (existing) {
          existing.lastTouchedMs = nowMs;
        }
      }
    }
    this.evictExpired(nowMs);
  }

  evictExpired(nowMs: number): string[] {
    const dead: string[] = [];
    for (const [key, seg] of this.segments) {
      if (nowMs - seg.lastTouchedMs > this.ttlMs) {
        dead.push(key);
      }
    }
    for (const key of dead) {
      this.segments.delete(key);
    }
    if (dead.length > 0) {
      this.version++;
    }
    return dead;
  }

  totalPoints(): number {
    let n = 0;
    for (const seg of this.segments.values()) {
      n += seg.positions.length / 3;
    }
    return n;
  }

  /** Pack every cached segment into one buffer pair for the renderer. */
  flatten(): { positions: Float32Array; colors: Uint8Array; count: number } {
    const count = this.totalPoints();
    const positions = new Float32Array(count * 3);
    const colors = new Uint8Array(count * 3);
    let off = 0;
    for (const seg of this.segments.values()) {
      positions.set(seg.positions, off * 3);
      colors.set(seg.colors, off * 3);
      off += seg.positions.length / 3;
    }
    return { positions, colors, count };
  }
}
