/**
 * First-person viewpoint: pointer-lock mouse look plus WASD/QE translation.
 * Yaw/pitch follow the stream's y-down convention (yaw 0 looks along +z,
 * positive yaw turns toward +x, positive pitch looks up).
 */

export interface ViewpointState {
  position: [number, number, number];
  yaw: number;
  pitch: number;
}

const MAX_PITCH = Math.PI / 2 - 0.05;

export class FirstPersonCamera {
  position: [number, number, number] = [0.0, 0.2, 1.0];
  yaw = 0;
  pitch = 0;
  moveSpeed = 0.9; // m/s
  private keys = new Set<string>();

  attach(canvas: HTMLCanvasElement): void {
    canvas.addEventListener("click", () => canvas.requestPointerLock());
    document.addEventListener("mousemove", (e) => {
      if (document.pointerLockElement !== canvas) return;
      const sensitivity = 0.0022;
      this.yaw = wrapAngle(this.yaw + e.movementX * sensitivity);
      this.pitch = clamp(this.pitch - e.movementY * sensitivity,
                         -MAX_PITCH, MAX_PITCH);
    });
    document.addEventListener("keydown", (e) => this.keys.add(e.code));
    document.addEventListener("keyup", (e) => this.keys.delete(e.code));
  }

  /** Advance translation from held keys; dt in seconds. */
  tick(dt: number): void {
    const step = this.moveSpeed * dt;
    const cy = Math.cos(this.yaw);
    const sy = Math.sin(this.yaw);
    // y-down frame: forward (sy, 0, cy), right (cy, 0, -sy), up (0, -1, 0)
    let dx = 0, dy = 0, dz = 0;
    if (this.keys.has("KeyW")) { dx += sy * step; dz += cy * step; }
    if (this.keys.has("KeyS")) { dx -= sy * step; dz -= cy * step; }
    if (this.keys.has("KeyD")) { dx += cy * step; dz -= sy * step; }
    if (this.keys.has("KeyA")) { dx -= cy * step; dz += sy * step; }
    if (this.keys.has("KeyQ")) { dy += step; }   // down
    if (this.keys.has("KeyE")) { dy -= step; }   // up
    this.position = [this.position[0] + dx, this.position[1] + dy,
                     this.position[2] + dz];
  }

  state(): ViewpointState {
    return { position: [...this.position], yaw: this.yaw, pitch: this.pitch };
  }

  /** Column-major 4x4 view matrix (anchor frame -> camera frame). */
  viewMatrix(): Float32Array {
    const cy = Math.cos(this.yaw), sy = Math.sin(this.yaw);
    const cp = Math.cos(this.pitch), sp = Math.sin(this.pitch);
    // camera axes in anchor coordinates (y-down convention; positive pitch
    // looks up, toward -y)
    const right: V3 = [cy, 0, -sy];
    const down: V3 = [sy * sp, cp, cy * sp];
    const forward: V3 = [sy * cp, -sp, cy * cp];
    const e = this.position;
    return new Float32Array([
      right[0], down[0], forward[0], 0,
      right[1], down[1], forward[1], 0,
      right[2], down[2], forward[2], 0,
      -dot(right, e), -dot(down, e), -dot(forward, e), 1,
    ]);
  }
}

type V3 = [number, number, number];

function dot(a: V3, b: readonly number[]): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function clamp(v: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, v));
}

export function wrapAngle(a: number): number {
  let w = ((a + Math.PI) % (2 * Math.PI) + 2 * Math.PI) % (2 * Math.PI) - Math.PI;
  return w === -Math.PI ? Math.PI : w;
}
