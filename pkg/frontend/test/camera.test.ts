import { describe, expect, it } from "vitest";

import { FirstPersonCamera, wrapAngle } from "../src/camera.js";

function apply(m: Float32Array, p: [number, number, number]): number[] {
  // column-major 4x4 times homogeneous point
  const out = [0, 0, 0];
  for (let r = 0; r < 3; r++) {
    out[r] = m[r] * p[0] + m[4 + r] * p[1] + m[8 + r] * p[2] + m[12 + r];
  }
  return out;
}

describe("FirstPersonCamera", () => {
  it("identity pose looks down +z", () => {
    const cam = new FirstPersonCamera();
    cam.position = [0, 0, 0];
    const v = apply(cam.viewMatrix(), [0, 0, 2]);
    expect(v[0]).toBeCloseTo(0, 6);
    expect(v[1]).toBeCloseTo(0, 6);
    expect(v[2]).toBeCloseTo(2, 6);
  });

  it("yaw 90 deg brings +x ahead", () => {
    const cam = new FirstPersonCamera();
    cam.position = [0, 0, 0];
    cam.yaw = Math.PI / 2;
    const v = apply(cam.viewMatrix(), [3, 0, 0]);
    expect(v[2]).toBeCloseTo(3, 5);
    expect(Math.abs(v[0])).toBeLessThan(1e-5);
  });

  it("positive pitch raises the gaze (y-down frame)", () => {
    const cam = new FirstPersonCamera();
    cam.position = [0, 0, 0];
    cam.pitch = Math.PI / 4;
    const up = apply(cam.viewMatrix(), [0, -1, 1]); // above and ahead
    expect(up[2]).toBeGreaterThan(1.0);
    expect(Math.abs(up[1])).toBeLessThan(0.01);
  });

  it("translation offsets the view", () => {
    const cam = new FirstPersonCamera();
    cam.position = [1, 2, 3];
    const v = apply(cam.viewMatrix(), [1, 2, 5]);
    expect(v).toEqual([0, 0, 2]);
  });

  it("wrapAngle stays in (-pi, pi]", () => {
    expect(wrapAngle(Math.PI + 0.25)).toBeCloseTo(-Math.PI + 0.25, 9);
    expect(wrapAngle(-Math.PI)).toBeCloseTo(Math.PI, 9);
    expect(wrapAngle(0.5)).toBeCloseTo(0.5, 12);
  });
});
