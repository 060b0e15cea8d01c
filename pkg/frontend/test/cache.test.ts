import { describe, expect, it } from "vitest";

import { ClientSceneCache } from "../src/cache.js";
import { ACTION_REPLACE, ACTION_REUSE, SceneUpdate, SegmentRecord } from "../src/wire.js";

function replace(cameraId: number, tileIndex: number, n = 2): SegmentRecord {
  return {
    cameraId, tileIndex, action: ACTION_REPLACE,
    positions: new Float32Array(n * 3).fill(1.5),
    colors: new Uint8Array(n * 3).fill(128),
  };
}

function reuse(cameraId: number, tileIndex: number): SegmentRecord {
  return { cameraId, tileIndex, action: ACTION_REUSE,
           positions: new Float32Array(0), colors: new Uint8Array(0) };
}

function update(frame: number, records: SegmentRecord[]): SceneUpdate {
  return { type: "scene_update", frameIndex: BigInt(frame),
           captureTimestampUs: 0n, records };
}

describe("ClientSceneCache", () => {
  it("replace stores points, reuse refreshes without altering them", () => {
    const cache = new ClientSceneCache(2000);
    cache.apply(update(1, [replace(0, 3, 4)]), 1000);
    expect(cache.totalPoints()).toBe(4);
    const before = cache.segments.get("0:3")!;
    cache.apply(update(2, [reuse(0, 3)]), 1500);
    const after = cache.segments.get("0:3")!;
    expect(after.positions).toBe(before.positions);
    expect(after.lastUpdateFrame).toBe(1n);
    expect(after.lastTouchedMs).toBe(1500);
  });

  it("evicts segments untouched past the TTL, keeps refreshed ones", () => {
    const cache = new ClientSceneCache(2000);
    cache.apply(update(1, [replace(0, 1), replace(0, 2)]), 0);
    cache.apply(update(2, [reuse(0, 1)]), 1800);
    const dead = cache.evictExpired(2500);
    expect(dead).toEqual(["0:2"]);
    expect(cache.segments.has("0:1")).toBe(true);

  });

  it("never removes a segment updated within the TTL", () => {
    const cache = new ClientSceneCache(2000);
    cache.apply(update(1, [replace(1, 7)]), 0);
    for (let t = 500; t <= 10_000; t += 500) {
      cache.apply(update(2, [reuse(1, 7)]), t);
      expect(cache.segments.has("1:7")).toBe(true);
    }
  });

  it("version bumps drive renderer re-uploads", () => {
    const cache = new ClientSceneCache(2000);
    const v0 = cache.version;
    cache.apply(update(1, [replace(0, 0)]), 0);
    expect(cache.version).toBeGreaterThan(v0);
    const v1 = cache.version;
    cache.apply(update(2, [reuse(0, 0)]), 100);
    expect(cache.version).toBe(v1); // reuse alone re-uploads nothing
  });

  it("flatten concatenates everything", () => {
    const cache = new ClientSceneCache(2000);
    cache.apply(update(1, [replace(0, 0, 2), replace(1, 5, 3)]), 0);
    const flat = cache.flatten();
    expect(flat.count).toBe(5);
    expect(flat.positions.length).toBe(15);
    expect(flat.colors.length).toBe(15);
  });
});
